#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

#include "account.hpp"
#include "address.hpp"
#include "errors.hpp"
#include "merkle_trie.hpp"

namespace statenet {

// Result of applying one block: the new global root plus every recomputed
// position, which is exactly what proof refresh needs.
struct state_update {
    digest new_root = zero_digest;
    std::unordered_map<trie_pos, digest> account_changed;
    // per touched contract: new storage root + recomputed slot positions
    std::map<address, std::pair<digest, std::unordered_map<trie_pos, digest>>> storage_changed;
};

// Rewrites the siblings of `key`'s path that were recomputed by an update.
// Levels cover depths [base_depth, width) leaf-to-root.
inline void refresh_levels(const address& key, int base_depth, std::vector<proof_level>& levels,
                           const std::unordered_map<trie_pos, digest>& changed)
{
    const int width = key.width();
    for (int d = base_depth; d < width; ++d) {
        auto it = changed.find(sibling_position(key, d));
        if (it != changed.end()) levels[static_cast<std::size_t>(width - 1 - d)].sibling = it->second;
    }
}

struct snapshot_entry {
    address key;
    account_record record;
    std::vector<std::pair<address, slot_value>> slots;  // full slot set
};

// Self-verifying chunk of state under one path, used by state sync.
struct state_snapshot {
    address path;
    int path_len = 0;
    std::vector<snapshot_entry> entries;               // key order
    std::vector<proof_level> proof_path;               // path position -> global root
    digest global_root = zero_digest;
    std::vector<std::pair<digest, code_blob>> code;    // distinct blobs referenced
};

struct diff_result {
    digest node = zero_digest;
    digest child0 = zero_digest;
    digest child1 = zero_digest;
};

// Prefix-owned slice of the global state: the account subtree under the
// node's prefix, per-contract slot tries, deduplicated code, and the proof
// path linking the subtree root to the global root.
template <class H = sha256_hasher>
class partial_state {
public:
    partial_state(int width, node_identity owner)
        : width_(width),
          owner_(std::move(owner)),
          owned_prefix_(owner_.id.truncated(owner_.prefix_len)),
          accounts_(width, owned_prefix_, owner_.prefix_len),
          proof_path_(static_cast<std::size_t>(owner_.prefix_len))
    {
        for (auto& l : proof_path_) l = proof_level{};
        for (int j = 0; j < owner_.prefix_len; ++j)
            proof_path_[static_cast<std::size_t>(j)].right = owned_prefix_.bit(owner_.prefix_len - 1 - j);
    }

    int width() const { return width_; }
    const node_identity& owner() const { return owner_; }
    int prefix_len() const { return owner_.prefix_len; }
    const address& owned_prefix() const { return owned_prefix_; }
    digest global_root() const { return global_root_; }
    std::size_t account_count() const { return accounts_.size(); }

    bool covers_key(const address& key) const { return covers(owner_, key); }

    // --- genesis seeding -------------------------------------------------

    void seed_account(const address& key, const account_record& r)
    {
        staged_[key] = r;
    }

    void seed_slot(const address& acct, const address& key, const slot_value& v)
    {
        storage_trie(acct).put(key, bytes(v.begin(), v.end()));
    }

    void seed_code(code_blob blob)
    {
        if (blob) code_.emplace(H::hash(*blob), std::move(blob));
    }

    // Fixes storage roots, fills the account subtree, and anchors it to the
    // global root through the supplied proof path.
    void finalize_genesis(std::vector<digest> path_siblings, const digest& global_root)
    {
        if (path_siblings.size() != proof_path_.size())
            throw verification_error("proof path length != prefix length");
        for (std::size_t j = 0; j < path_siblings.size(); ++j)
            proof_path_[j].sibling = path_siblings[j];
        for (auto& [key, rec] : staged_) {
            if (rec.is_contract()) {
                auto it = storage_.find(key);
                rec.storage_root = it == storage_.end() ? zero_digest : it->second.root();
            }
            accounts_.put(key, rec.serialize());
        }
        staged_.clear();
        global_root_ = global_root;
        check_anchor();
    }

    digest subtree_root() { return accounts_.root(); }

    const std::vector<proof_level>& proof_path() const { return proof_path_; }

    // --- reads ------------------------------------------------------------

    std::optional<account_record> record(const address& key) const
    {
        const bytes* raw = accounts_.get(key);
        if (!raw) return std::nullopt;
        return account_record::parse(*raw);
    }

    std::optional<slot_value> slot(const address& acct, const address& key) const
    {
        auto it = storage_.find(acct);
        if (it == storage_.end()) return std::nullopt;
        const bytes* raw = it->second.get(key);
        if (!raw) return std::nullopt;
        slot_value v{};
        std::copy(raw->begin(), raw->end(), v.begin());
        return v;
    }

    code_blob code(const digest& hash) const
    {
        auto it = code_.find(hash);
        return it == code_.end() ? nullptr : it->second;
    }

    // Account bundle with proofs against the current global root.  With no
    // slot_keys the full slot set is returned; unknown keys get absence
    // proofs.  Keys outside the owned range raise not_held_error.
    account_witness get_with_proof(const address& key,
                                   const std::optional<std::vector<address>>& slot_keys = std::nullopt,
                                   bool want_code = true)
    {
        if (!covers_key(key)) throw not_held_error("account outside owned prefix");
        account_witness w;
        w.key = key;
        w.record = record(key);
        w.account_proof = full_proof(key);
        if (w.record && w.record->is_contract()) {
            auto& trie = storage_trie(key);
            if (slot_keys) {
                for (const auto& sk : *slot_keys) w.slots.push_back(prove_slot(trie, sk));
            } else {
                std::vector<address> all;
                trie.for_each([&](const address& sk, const bytes&) { all.push_back(sk); });
                for (const auto& sk : all) w.slots.push_back(prove_slot(trie, sk));
            }
            if (want_code) w.code = code(w.record->code_hash);
        }
        return w;
    }

    std::size_t measure_proof_size(const address& key)
    {
        if (!covers_key(key) || !accounts_.contains(key))
            throw not_held_error("account not held");
        return full_proof(key).wire_size();
    }

    // --- block application --------------------------------------------------

    // Applies the final post-block values.  Every touched-but-unowned
    // account must come with a witness valid against parent_root; the
    // returned update carries all recomputed positions.
    state_update apply_block_writes(const std::vector<account_write>& writes,
                                    const std::vector<account_witness>& witnesses,
                                    const digest& parent_root)
    {
        if (parent_root != global_root_)
            throw verification_error("state is not at the block's parent root");
        std::map<address, const account_witness*> by_key;
        for (const auto& w : witnesses) {
            if (!verify_account_witness<H>(global_root_, w))
                throw verification_error("invalid pre-state witness");
            by_key[w.key] = &w;
        }

        state_update upd;
        root_overlay<H> acct_ov(width_);
        bool any_owned = false;

        for (const auto& w : writes) {
            account_record rec;
            rec.kind = w.kind;
            rec.nonce = w.nonce;
            rec.balance = w.balance;
            rec.code_hash = w.code_hash;
            if (covers_key(w.key)) {
                any_owned = true;
                if (!w.slot_writes.empty() || rec.is_contract()) {
                    auto& trie = storage_trie(w.key);
                    for (const auto& [sk, sv] : w.slot_writes) trie.put(sk, bytes(sv.begin(), sv.end()));
                    rec.storage_root = trie.root();
                }
                accounts_.put(w.key, rec.serialize());
            } else {
                auto wit = by_key.find(w.key);
                if (wit == by_key.end())
                    throw cannot_update_error("touched account lacks a witness: " + w.key.to_hex());
                rec.storage_root = unowned_storage_root(w, *wit->second, upd);
                bytes leaf_bytes = rec.serialize();
                acct_ov.set_leaf(w.key, trie_hash<H>::leaf(leaf_bytes));
            }
        }

        for (const auto& [key, wptr] : by_key) acct_ov.add_proof(key, wptr->account_proof);
        for (int j = 0; j < owner_.prefix_len; ++j) {
            int d = owner_.prefix_len - 1 - j;
            trie_pos pos = sibling_position(owned_prefix_, d);
            acct_ov.add_known(pos, proof_path_[static_cast<std::size_t>(j)].sibling);
        }
        // The owned subtree root anchors the overlay even when nothing owned
        // changed, so the new global root always folds through our prefix.
        (void)any_owned;
        acct_ov.set_changed(trie_pos{owned_prefix_, owner_.prefix_len}, accounts_.root());

        upd.new_root = acct_ov.compute_root();
        upd.account_changed = acct_ov.changed();

        for (std::size_t j = 0; j < proof_path_.size(); ++j) {
            int d = owner_.prefix_len - 1 - static_cast<int>(j);
            if (auto nd = acct_ov.changed_digest(sibling_position(owned_prefix_, d)))
                proof_path_[j].sibling = *nd;
        }
        global_root_ = upd.new_root;
        check_anchor();
        return upd;
    }

    // --- state sync ---------------------------------------------------------

    // All leaves under `path` plus the proof path anchoring that position to
    // the global root.  The path must lie within the owned range.
    state_snapshot subtree_snapshot(const address& path, int path_len)
    {
        if (path_len < owner_.prefix_len || !prefix_match(owned_prefix_, owner_.prefix_len, path))
            throw not_held_error("snapshot path outside owned range");
        state_snapshot snap;
        snap.path = path.truncated(path_len);
        snap.path_len = path_len;
        snap.global_root = global_root_;
        accounts_.root();
        std::map<digest, code_blob> blob_set;
        accounts_.for_each_under(path, path_len, [&](const address& key, const bytes& raw) {
            snapshot_entry e;
            e.key = key;
            e.record = account_record::parse(raw);
            if (e.record.is_contract()) {
                auto it = storage_.find(key);
                if (it != storage_.end())
                    it->second.for_each([&](const address& sk, const bytes& sv) {
                        slot_value v{};
                        std::copy(sv.begin(), sv.end(), v.begin());
                        e.slots.emplace_back(sk, v);
                    });
                if (auto blob = code(e.record.code_hash)) blob_set.emplace(e.record.code_hash, blob);
            }
            snap.entries.push_back(std::move(e));
        });
        // siblings from the path position up: inside the subtree from the
        // trie, above it from the node's own proof path
        for (int d = path_len - 1; d >= owner_.prefix_len; --d) {
            trie_pos sib = sibling_position(snap.path, d);
            snap.proof_path.push_back({accounts_.digest_at(sib.bits, sib.depth), snap.path.bit(d)});
        }
        for (const auto& l : proof_path_) snap.proof_path.push_back(l);
        snap.code.assign(blob_set.begin(), blob_set.end());
        return snap;
    }

    // Installs a verified snapshot chunk (joining node side).  The chunk
    // must be within the owned range; the top of its proof path becomes the
    // node's own proof path.
    void load_snapshot(const state_snapshot& snap)
    {
        if (snap.path_len < owner_.prefix_len
            || !prefix_match(owned_prefix_, owner_.prefix_len, snap.path))
            throw not_held_error("snapshot chunk outside owned range");
        for (const auto& e : snap.entries) {
            for (const auto& [sk, sv] : e.slots) storage_trie(e.key).put(sk, bytes(sv.begin(), sv.end()));
            accounts_.put(e.key, e.record.serialize());
        }
        for (const auto& [h, blob] : snap.code) code_.emplace(h, blob);
        const std::size_t above = static_cast<std::size_t>(snap.path_len - owner_.prefix_len);
        for (std::size_t j = 0; j < proof_path_.size(); ++j)
            proof_path_[j] = snap.proof_path[above + j];
        global_root_ = snap.global_root;
    }

    // Digest of the position at `path` and of both children; the rejoin
    // protocol descends only into mismatching branches.
    diff_result diff_hashes(const address& path, int path_len)
    {
        if (path_len < owner_.prefix_len || !prefix_match(owned_prefix_, owner_.prefix_len, path))
            throw not_held_error("diff path outside owned range");
        diff_result r;
        r.node = accounts_.digest_at(path, path_len);
        if (path_len < width_) {
            r.child0 = accounts_.digest_at(path.truncated(path_len), path_len + 1);
            r.child1 = accounts_.digest_at(path.truncated(path_len).with_bit(path_len, true), path_len + 1);
        }
        return r;
    }

    // --- accounting -----------------------------------------------------------

    std::size_t stored_code_bytes() const
    {
        std::size_t n = 0;
        for (const auto& [h, blob] : code_) n += blob->size();
        return n;
    }

    std::size_t slot_count() const
    {
        std::size_t n = 0;
        for (const auto& [k, t] : storage_) n += t.size();
        return n;
    }

    template <class Fn>
    void for_each_account(Fn&& fn) const
    {
        accounts_.for_each([&](const address& key, const bytes& raw) {
            fn(key, account_record::parse(raw));
        });
    }

private:
    merkle_trie<H>& storage_trie(const address& acct)
    {
        auto it = storage_.find(acct);
        if (it == storage_.end())
            it = storage_.emplace(acct, merkle_trie<H>(width_)).first;
        return it->second;
    }

    merkle_proof full_proof(const address& key)
    {
        merkle_proof p = accounts_.prove(key);
        p.levels.insert(p.levels.end(), proof_path_.begin(), proof_path_.end());
        p.root = global_root_;
        return p;
    }

    static proven_slot prove_slot(merkle_trie<H>& trie, const address& key)
    {
        proven_slot s;
        s.key = key;
        if (const bytes* raw = trie.get(key)) {
            slot_value v{};
            std::copy(raw->begin(), raw->end(), v.begin());
            s.value = v;
        }
        s.proof = trie.prove(key);
        return s;
    }

    digest unowned_storage_root(const account_write& w, const account_witness& wit, state_update& upd)
    {
        const digest old_root = wit.record ? wit.record->storage_root : zero_digest;
        if (w.slot_writes.empty()) return old_root;
        root_overlay<H> ov(width_, 0, {}, old_root == zero_digest);
        for (const auto& s : wit.slots) ov.add_proof(s.key, s.proof);
        for (const auto& [sk, sv] : w.slot_writes) {
            ov.set_leaf(sk, trie_hash<H>::leaf(byte_view(sv.data(), sv.size())));
        }
        digest new_root = ov.compute_root();
        upd.storage_changed[w.key] = {new_root, ov.changed()};
        return new_root;
    }

    void check_anchor()
    {
        digest cur = accounts_.root();
        cur = fold_proof<H>(cur, proof_path_);
        if (cur != global_root_)
            throw verification_error("owned subtree does not anchor to the global root");
    }

    int width_;
    node_identity owner_;
    address owned_prefix_;
    merkle_trie<H> accounts_;
    std::map<address, merkle_trie<H>> storage_;
    std::map<digest, code_blob> code_;
    std::map<address, account_record> staged_;
    std::vector<proof_level> proof_path_;  // leaf-to-root from the subtree root
    digest global_root_ = zero_digest;
};

} // namespace statenet
