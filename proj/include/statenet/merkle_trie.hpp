#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "address.hpp"
#include "hash.hpp"

namespace statenet {

// One fold step of a Merkle path.  `right` is the path bit at that depth:
// true means the folded value is the right child and the sibling the left.
struct proof_level {
    digest sibling;
    bool right = false;
};

// Authenticated path from a leaf position to a (sub)tree root.  Levels are
// stored leaf-to-root; levels[j] folds at depth (width - 1 - j).  An absence
// proof is the same structure folded from the zero sentinel.
struct merkle_proof {
    digest leaf = zero_digest;   // digest of the leaf input, zero when absent
    std::vector<proof_level> levels;
    digest root = zero_digest;   // claimed root

    std::size_t sibling_count() const
    {
        std::size_t n = 0;
        for (const auto& l : levels)
            if (l.sibling != zero_digest) ++n;
        return n;
    }

    // Wire framing: 2-byte big-endian level count, one presence bitmap byte
    // per 8 levels (MSB-first), then the non-empty sibling digests in
    // leaf-to-root order.  Empty (all-zero) siblings are elided.
    bytes encode() const
    {
        bytes out;
        put_u16_be(out, static_cast<std::uint16_t>(levels.size()));
        const std::size_t bitmap_bytes = ceil_div(levels.size(), 8);
        std::size_t bitmap_at = out.size();
        out.resize(out.size() + bitmap_bytes, 0);
        for (std::size_t j = 0; j < levels.size(); ++j) {
            if (levels[j].sibling == zero_digest) continue;
            out[bitmap_at + j / 8] |= static_cast<std::uint8_t>(0x80u >> (j % 8));
            out.insert(out.end(), levels[j].sibling.begin(), levels[j].sibling.end());
        }
        return out;
    }

    // Serialized size: 32 bytes per non-empty sibling plus the framing
    // (count field and bitmap), which is constant for a given path length.
    std::size_t wire_size() const
    {
        return 2 + ceil_div(levels.size(), 8) + 32 * sibling_count();
    }
};

constexpr std::size_t proof_framing_bytes(int path_levels)
{
    return 2 + ceil_div(static_cast<std::uint64_t>(path_levels), 8);
}

// Folds a leaf digest up through the proof.  Pure recomputation.
template <class H>
digest fold_proof(const digest& leaf, const std::vector<proof_level>& levels)
{
    digest cur = leaf;
    for (const auto& l : levels)
        cur = l.right ? trie_hash<H>::combine(l.sibling, cur) : trie_hash<H>::combine(cur, l.sibling);
    return cur;
}

// True iff folding the (possibly absent) leaf bytes through the proof's
// siblings reproduces `root`.  Returns false on mismatch, never throws.
template <class H>
bool verify_proof(const digest& root, std::optional<byte_view> leaf_bytes, const merkle_proof& p)
{
    const digest leaf = leaf_bytes ? trie_hash<H>::leaf(*leaf_bytes) : zero_digest;
    return fold_proof<H>(leaf, p.levels) == root;
}

// A position in the conceptual full-depth trie: the first `depth` bits of
// `bits` name the node.  depth 0 with empty bits is the root.
struct trie_pos {
    address bits;  // canonical: bits at index >= depth are zero
    int depth = 0;

    friend bool operator==(const trie_pos& a, const trie_pos& b)
    {
        return a.depth == b.depth && a.bits == b.bits;
    }
};

} // namespace statenet

template <>
struct std::hash<statenet::trie_pos> {
    std::size_t operator()(const statenet::trie_pos& p) const noexcept
    {
        return std::hash<statenet::address>()(p.bits) * 31u
               + static_cast<std::size_t>(p.depth) * 0x9e3779b9u;
    }
};

namespace statenet {

inline trie_pos position_of(const address& key, int depth)
{
    return trie_pos{key.truncated(depth), depth};
}

// Sibling position used when folding the node at depth d+1 on `key`'s path
// up to depth d: flip bit d.
inline trie_pos sibling_position(const address& key, int d)
{
    address bits = key.truncated(d + 1);
    bits.set_bit(d, !key.bit(d));
    return trie_pos{bits, d + 1};
}

// Sparse binary Merkle trie over fixed-width keys.  A subtree holding a
// single key is stored as one leaf node; its digest is the chain of
// combine() folds against the zero sentinel down to the conceptual leaf at
// full depth, so digests match the uncompressed trie exactly.
//
// The trie may represent a subtree of a larger space: `base` / `base_depth`
// name the position of this trie's root in the global trie, and every key
// must share that prefix.
template <class H = sha256_hasher>
class merkle_trie {
public:
    using hashfn = trie_hash<H>;

    explicit merkle_trie(int width, address base = {}, int base_depth = 0)
        : width_(width), base_depth_(base_depth)
    {
        base_ = base.width() == 0 ? address(width) : base.truncated(base_depth);
        if (base_.width() != width) throw width_error("trie base width mismatch");
    }

    int width() const { return width_; }
    int base_depth() const { return base_depth_; }
    const address& base() const { return base_; }
    std::size_t size() const { return size_; }

    void put(const address& key, bytes value)
    {
        check_key(key);
        insert(root_, base_depth_, key, std::move(value));
    }

    const bytes* get(const address& key) const
    {
        check_key(key);
        const node* n = root_.get();
        int depth = base_depth_;
        while (n) {
            if (n->is_leaf) return n->key == key ? &n->value : nullptr;
            n = n->kid[key.bit(depth)].get();
            ++depth;
        }
        return nullptr;
    }

    bool contains(const address& key) const { return get(key) != nullptr; }

    digest root()
    {
        return root_ ? compute(*root_, base_depth_) : zero_digest;
    }

    // Membership proof when the key is present, absence proof otherwise.
    // Levels cover depths [base_depth, width); fold with the proof path of
    // the enclosing state to reach a global root.
    merkle_proof prove(const address& key)
    {
        check_key(key);
        root();  // freshen digests
        merkle_proof p;
        p.levels.assign(static_cast<std::size_t>(width_ - base_depth_), proof_level{});
        auto level_of = [&](int depth) -> proof_level& {
            // depth in [base_depth, width): levels are leaf-to-root
            return p.levels[static_cast<std::size_t>(width_ - 1 - depth)];
        };
        for (int d = base_depth_; d < width_; ++d) level_of(d).right = key.bit(d);

        const node* n = root_.get();
        int depth = base_depth_;
        while (n && !n->is_leaf) {
            bool dir = key.bit(depth);
            const node* other = n->kid[!dir].get();
            level_of(depth).sibling = other ? node_digest(*other, depth + 1) : zero_digest;
            n = n->kid[dir].get();
            ++depth;
        }
        if (n) {
            if (n->key == key) {
                p.leaf = hashfn::leaf(n->value);
            } else {
                // key diverges from the resident leaf at depth m; that leaf's
                // chain digest is the only non-empty sibling below `depth`.
                int m = common_prefix_len(n->key, key);
                level_of(m).sibling = chain_digest(*n, m + 1);
                p.leaf = zero_digest;
            }
        } else {
            p.leaf = zero_digest;
        }
        p.root = root();
        return p;
    }

    // Digest of an arbitrary position at `depth` on the path named by the
    // first `depth` bits of `path`.  Positions outside this trie's base are
    // a usage error; positions in empty space return the zero sentinel.
    digest digest_at(const address& path, int depth)
    {
        if (depth < base_depth_ || !prefix_match(base_, base_depth_, path))
            throw not_held_error("position outside trie base");
        root();
        const node* n = root_.get();
        int d = base_depth_;
        while (n && d < depth) {
            if (n->is_leaf) return prefix_match(n->key, depth, path) ? chain_digest(*n, depth) : zero_digest;
            n = n->kid[path.bit(d)].get();
            ++d;
        }
        return n ? node_digest(*n, depth) : zero_digest;
    }

    template <class Fn>
    void for_each(Fn&& fn) const
    {
        if (root_) walk(*root_, fn);
    }

    // Visits leaves under the position (path, depth), in key order.
    template <class Fn>
    void for_each_under(const address& path, int depth, Fn&& fn) const
    {
        const node* n = root_.get();
        int d = base_depth_;
        while (n && d < depth) {
            if (n->is_leaf) {
                if (prefix_match(n->key, depth, path)) fn(n->key, n->value);
                return;
            }
            n = n->kid[path.bit(d)].get();
            ++d;
        }
        if (n) walk(*n, fn);
    }

private:
    struct node {
        std::unique_ptr<node> kid[2];
        digest dig = zero_digest;
        bool dirty = true;
        bool is_leaf = false;
        address key;   // leaf only
        bytes value;   // leaf only
    };

    void check_key(const address& key) const
    {
        if (key.width() != width_) throw width_error("trie key width mismatch");
        if (!prefix_match(base_, base_depth_, key)) throw not_held_error("key outside trie base");
    }

    void insert(std::unique_ptr<node>& slot, int depth, const address& key, bytes&& value)
    {
        if (!slot) {
            slot = std::make_unique<node>();
            slot->is_leaf = true;
            slot->key = key;
            slot->value = std::move(value);
            ++size_;
            return;
        }
        node& n = *slot;
        n.dirty = true;
        if (!n.is_leaf) {
            insert(n.kid[key.bit(depth)], depth + 1, key, std::move(value));
            return;
        }
        if (n.key == key) {
            n.value = std::move(value);
            return;
        }
        // Split: push the resident leaf down to the divergence depth.
        auto old = std::move(slot);
        int m = common_prefix_len(old->key, key);
        std::unique_ptr<node>* cur = &slot;
        for (int d = depth; d < m; ++d) {
            *cur = std::make_unique<node>();
            cur = &(*cur)->kid[key.bit(d)];
        }
        *cur = std::make_unique<node>();
        node& fork = **cur;
        auto leaf = std::make_unique<node>();
        leaf->is_leaf = true;
        leaf->key = key;
        leaf->value = std::move(value);
        fork.kid[key.bit(m)] = std::move(leaf);
        old->dirty = true;
        fork.kid[!key.bit(m)] = std::move(old);
        ++size_;
    }

    // Digest of the conceptual position at `depth` for a leaf stored there:
    // fold the leaf digest up from full depth against zero siblings.
    digest chain_digest(const node& leaf, int depth) const
    {
        digest h = hashfn::leaf(leaf.value);
        for (int d = width_ - 1; d >= depth; --d)
            h = leaf.key.bit(d) ? hashfn::combine(zero_digest, h) : hashfn::combine(h, zero_digest);
        return h;
    }

    digest compute(node& n, int depth)
    {
        if (!n.dirty) return n.dig;
        if (n.is_leaf) {
            n.dig = chain_digest(n, depth);
        } else {
            digest l = n.kid[0] ? compute(*n.kid[0], depth + 1) : zero_digest;
            digest r = n.kid[1] ? compute(*n.kid[1], depth + 1) : zero_digest;
            n.dig = hashfn::combine(l, r);
        }
        n.dirty = false;
        return n.dig;
    }

    // Requires digests fresh (root() called).
    digest node_digest(const node& n, int depth) const
    {
        if (n.is_leaf && n.dirty) return chain_digest(n, depth);
        return n.dig;
    }

    template <class Fn>
    static void walk(const node& n, Fn& fn)
    {
        if (n.is_leaf) {
            fn(n.key, n.value);
            return;
        }
        if (n.kid[0]) walk(*n.kid[0], fn);
        if (n.kid[1]) walk(*n.kid[1], fn);
    }

    int width_;
    int base_depth_;
    address base_;
    std::unique_ptr<node> root_;
    std::size_t size_ = 0;
};

// Stateless root update: given verified pre-state proofs for a set of leaf
// positions and the new digests of changed positions, recomputes every
// affected ancestor and the new root without holding the full trie.
template <class H>
class root_overlay {
public:
    // empty_base: the pre-state subtree is known to be entirely empty, so
    // every position not otherwise recorded is provably the zero sentinel.
    explicit root_overlay(int width, int root_depth = 0, address root_bits = {},
                          bool empty_base = false)
        : width_(width), root_depth_(root_depth), empty_base_(empty_base)
    {
        root_bits_ = root_bits.width() == 0 ? address(width) : root_bits.truncated(root_depth);
    }

    // Records the pre-state siblings of `key`'s path as known digests.
    void add_proof(const address& key, const merkle_proof& p)
    {
        if (static_cast<int>(p.levels.size()) != width_ - root_depth_)
            throw verification_error("proof path length mismatch");
        for (int d = root_depth_; d < width_; ++d) {
            const auto& lvl = p.levels[static_cast<std::size_t>(width_ - 1 - d)];
            add_known(sibling_position(key, d), lvl.sibling);
        }
        add_known(position_of(key, width_), p.leaf);
    }

    void add_known(const trie_pos& pos, const digest& d)
    {
        auto [it, fresh] = known_.emplace(pos, d);
        if (!fresh && it->second != d)
            throw verification_error("conflicting sibling digests across proofs");
    }

    // Marks a position as changed with its new digest.  Leaf positions use
    // depth == width; interior positions (e.g. an owned subtree root) are
    // allowed as long as no changed position is an ancestor of another.
    void set_changed(const trie_pos& pos, const digest& d)
    {
        changed_[pos] = d;
        pending_.insert(pos);
        computed_ = false;
    }

    void set_leaf(const address& key, const digest& leaf_digest)
    {
        set_changed(position_of(key, width_), leaf_digest);
    }

    // Recomputes all affected ancestors bottom-up and returns the new root.
    digest compute_root()
    {
        if (computed_) return root_digest_;
        std::map<int, std::vector<trie_pos>, std::greater<>> frontier;
        for (const auto& p : pending_) frontier[p.depth].push_back(p);
        pending_.clear();
        while (!frontier.empty()) {
            auto it = frontier.begin();
            int depth = it->first;
            auto batch = std::move(it->second);
            frontier.erase(it);
            if (depth == root_depth_) break;
            for (const auto& pos : batch) {
                trie_pos parent{pos.bits.truncated(depth - 1), depth - 1};
                if (changed_.count(parent)) continue;  // already recomputed
                digest kid[2];
                for (int b = 0; b < 2; ++b) {
                    trie_pos c{parent.bits.with_bit(depth - 1, b != 0), depth};
                    kid[b] = lookup(c);
                }
                changed_[parent] = trie_hash<H>::combine(kid[0], kid[1]);
                frontier[parent.depth].push_back(parent);
            }
        }
        trie_pos root{root_bits_, root_depth_};
        auto found = changed_.find(root);
        if (found == changed_.end()) throw cannot_update_error("no changes reached the root");
        root_digest_ = found->second;
        computed_ = true;
        return root_digest_;
    }

    // Post-compute digest of a position: new value if it changed, nothing if
    // it was untouched (the caller's old digest remains valid).
    std::optional<digest> changed_digest(const trie_pos& pos) const
    {
        auto it = changed_.find(pos);
        if (it == changed_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t changed_count() const { return changed_.size(); }

    const std::unordered_map<trie_pos, digest>& changed() const { return changed_; }

private:
    digest lookup(const trie_pos& pos) const
    {
        if (auto it = changed_.find(pos); it != changed_.end()) return it->second;
        if (auto it = known_.find(pos); it != known_.end()) return it->second;
        if (empty_base_) return zero_digest;
        throw cannot_update_error("missing sibling digest for touched branch");
    }

    int width_;
    int root_depth_;
    bool empty_base_;
    address root_bits_;
    std::unordered_map<trie_pos, digest> known_;
    std::unordered_map<trie_pos, digest> changed_;
    std::unordered_set<trie_pos> pending_;
    digest root_digest_ = zero_digest;
    bool computed_ = false;
};

} // namespace statenet
