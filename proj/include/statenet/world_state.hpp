#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "partial_state.hpp"

namespace statenet {

// Monolithic full state: the genesis source, the witness server used by the
// bandwidth replay, and the convergence reference for simulations.  Holds
// every account, all slot tries and the deduplicated code store.
template <class H = sha256_hasher>
class world_state {
public:
    explicit world_state(int width) : width_(width), accounts_(width) {}

    int width() const { return width_; }

    void set_account(const address& key, account_record rec)
    {
        records_[key] = rec;
        dirty_.insert(key);
    }

    void set_slot(const address& acct, const address& key, const slot_value& v)
    {
        storage_trie(acct).put(key, bytes(v.begin(), v.end()));
        dirty_.insert(acct);
    }

    // Registers a code blob and returns its hash.
    digest set_code(code_blob blob)
    {
        digest h = H::hash(*blob);
        code_.emplace(h, std::move(blob));
        return h;
    }

    digest root()
    {
        flush();
        return accounts_.root();
    }

    std::optional<account_record> record(const address& key)
    {
        flush();
        auto it = records_.find(key);
        if (it == records_.end()) return std::nullopt;
        return it->second;
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

    std::size_t account_count() const { return records_.size(); }

    std::size_t slot_count(const address& acct) const
    {
        auto it = storage_.find(acct);
        return it == storage_.end() ? 0 : it->second.size();
    }

    account_witness make_witness(const address& key,
                                 const std::optional<std::vector<address>>& slot_keys = std::nullopt,
                                 bool want_code = true)
    {
        flush();
        account_witness w;
        w.key = key;
        auto it = records_.find(key);
        if (it != records_.end()) w.record = it->second;
        w.account_proof = accounts_.prove(key);
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

    // Applies post-block values directly; this is the serving node's path,
    // not the stateless update.
    digest apply(const std::vector<account_write>& writes)
    {
        flush();
        for (const auto& w : writes) {
            account_record rec;
            rec.kind = w.kind;
            rec.nonce = w.nonce;
            rec.balance = w.balance;
            rec.code_hash = w.code_hash;
            for (const auto& [sk, sv] : w.slot_writes)
                storage_trie(w.key).put(sk, bytes(sv.begin(), sv.end()));
            records_[w.key] = rec;
            dirty_.insert(w.key);
        }
        return root();
    }

    // Sibling digests along the path prefix, leaf-to-root, suitable as a
    // node's proof path when its subtree matches this state.
    std::vector<digest> proof_path_for(const address& prefix, int len)
    {
        flush();
        accounts_.root();
        std::vector<digest> out;
        for (int d = len - 1; d >= 0; --d) {
            trie_pos sib = sibling_position(prefix, d);
            out.push_back(accounts_.digest_at(sib.bits, sib.depth));
        }
        return out;
    }

    // Builds a node's owned slice: covered accounts with their slot tries
    // and code, anchored by the proof path for the node's prefix.
    partial_state<H> make_partial(const node_identity& owner)
    {
        flush();
        partial_state<H> ps(width_, owner);
        accounts_.for_each_under(owner.id, owner.prefix_len, [&](const address& key, const bytes& raw) {
            account_record rec = account_record::parse(raw);
            ps.seed_account(key, rec);
            if (rec.is_contract()) {
                auto it = storage_.find(key);
                if (it != storage_.end())
                    it->second.for_each([&](const address& sk, const bytes& sv) {
                        slot_value v{};
                        std::copy(sv.begin(), sv.end(), v.begin());
                        ps.seed_slot(key, sk, v);
                    });
                if (auto blob = code(rec.code_hash)) ps.seed_code(blob);
            }
        });
        ps.finalize_genesis(proof_path_for(owner.id, owner.prefix_len), root());
        return ps;
    }

    template <class Fn>
    void for_each_account(Fn&& fn)
    {
        flush();
        for (const auto& [key, rec] : records_) fn(key, rec);
    }

private:
    merkle_trie<H>& storage_trie(const address& acct)
    {
        auto it = storage_.find(acct);
        if (it == storage_.end())
            it = storage_.emplace(acct, merkle_trie<H>(width_)).first;
        return it->second;
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

    // Re-serializes records whose storage root changed.
    void flush()
    {
        for (const auto& key : dirty_) {
            auto it = records_.find(key);
            if (it == records_.end()) continue;
            if (it->second.is_contract()) {
                auto st = storage_.find(key);
                it->second.storage_root = st == storage_.end() ? zero_digest : st->second.root();
            }
            accounts_.put(key, it->second.serialize());
        }
        dirty_.clear();
    }

    int width_;
    merkle_trie<H> accounts_;
    std::map<address, merkle_trie<H>> storage_;
    std::map<digest, code_blob> code_;
    std::map<address, account_record> records_;
    std::set<address> dirty_;
};

// Rebuilds the chunk's subtree root from its entries and folds it through
// the carried proof path; also checks every entry's storage root and code.
template <class H>
bool verify_snapshot(const state_snapshot& snap, int width)
{
    merkle_trie<H> rebuilt(width, snap.path, snap.path_len);
    std::map<digest, code_blob> blobs(snap.code.begin(), snap.code.end());
    for (const auto& e : snap.entries) {
        merkle_trie<H> slots(width);
        for (const auto& [sk, sv] : e.slots) slots.put(sk, bytes(sv.begin(), sv.end()));
        if (slots.root() != e.record.storage_root) return false;
        if (e.record.is_contract() && e.record.code_hash != zero_digest) {
            auto it = blobs.find(e.record.code_hash);
            if (it != blobs.end() && H::hash(*it->second) != e.record.code_hash) return false;
        }
        if (!prefix_match(snap.path, snap.path_len, e.key)) return false;
        rebuilt.put(e.key, e.record.serialize());
    }
    return fold_proof<H>(rebuilt.root(), snap.proof_path) == snap.global_root;
}

} // namespace statenet
