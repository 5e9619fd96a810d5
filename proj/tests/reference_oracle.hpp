#pragma once

// Brute-force reference implementations used as oracles.  Everything here
// recomputes digests from first principles (recursive bisection over sorted
// leaves) and never calls into merkle_trie internals, so agreement is
// meaningful.

#include <map>
#include <vector>

#include <statenet/account.hpp>
#include <statenet/hash.hpp>

namespace refo {

using statenet::address;
using statenet::bytes;
using statenet::digest;
using statenet::zero_digest;

template <class H>
statenet::digest subtree_root(const std::map<address, bytes>& leaves,
                              typename std::map<address, bytes>::const_iterator lo,
                              typename std::map<address, bytes>::const_iterator hi, int width,
                              int depth)
{
    using th = statenet::trie_hash<H>;
    if (lo == hi) return zero_digest;
    if (depth == width) return th::leaf(lo->second);
    auto mid = lo;
    while (mid != hi && !mid->first.bit(depth)) ++mid;
    return th::combine(subtree_root<H>(leaves, lo, mid, width, depth + 1),
                       subtree_root<H>(leaves, mid, hi, width, depth + 1));
}

// Root of the full-width trie holding exactly `leaves`.
template <class H>
digest trie_root(const std::map<address, bytes>& leaves, int width)
{
    return subtree_root<H>(leaves, leaves.begin(), leaves.end(), width, 0);
}

// Full-state account model for protocol oracles: plain maps, direct
// recomputation of every root after each block.
template <class H>
struct flat_state {
    explicit flat_state(int w) : width(w) {}

    int width;
    std::map<address, statenet::account_record> accounts;
    std::map<address, std::map<address, statenet::slot_value>> slots;

    digest storage_root(const address& acct) const
    {
        auto it = slots.find(acct);
        if (it == slots.end()) return zero_digest;
        std::map<address, bytes> leaves;
        for (const auto& [k, v] : it->second) leaves.emplace(k, bytes(v.begin(), v.end()));
        return trie_root<H>(leaves, width);
    }

    digest root() const
    {
        std::map<address, bytes> leaves;
        for (const auto& [k, rec] : accounts) {
            statenet::account_record r = rec;
            if (r.is_contract()) r.storage_root = storage_root(k);
            leaves.emplace(k, r.serialize());
        }
        return trie_root<H>(leaves, width);
    }

    void apply(const std::vector<statenet::account_write>& writes)
    {
        for (const auto& w : writes) {
            statenet::account_record r;
            r.kind = w.kind;
            r.nonce = w.nonce;
            r.balance = w.balance;
            r.code_hash = w.code_hash;
            accounts[w.key] = r;
            for (const auto& [sk, sv] : w.slot_writes) slots[w.key][sk] = sv;
        }
    }
};

} // namespace refo
