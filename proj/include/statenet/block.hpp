#pragma once

#include <map>
#include <optional>
#include <set>
#include <vector>

#include "account.hpp"
#include "address.hpp"
#include "hash.hpp"

namespace statenet {

// Transactions are access-list programs: each op names the state it touches
// and writes carry either a literal value (scripted scenarios) or a value
// derived deterministically from the op's coordinates (generated traces).
enum class op_kind : std::uint8_t {
    read_account,
    write_account,
    read_slot,
    write_slot,
    exec_code,
};

struct access_op {
    op_kind kind = op_kind::read_account;
    address account;                   // raw protocol-level address
    address slot;                      // slot ops only (raw)
    std::optional<std::uint64_t> literal;  // explicit write value
    std::uint32_t code_size = 0;       // exec_code size hint
    std::uint64_t code_id = 0;         // exec_code blob identity
};

struct transaction {
    std::vector<access_op> ops;
};

struct block {
    std::uint64_t number = 0;
    std::uint32_t proposer = 0;
    digest parent_root = zero_digest;
    digest post_root = zero_digest;
    std::vector<transaction> txs;
};

// Manifest of everything a block's transactions touch, gossiped with the
// block instead of the data itself.
struct state_list_entry {
    address account;                 // raw
    account_kind kind = account_kind::external;
    std::vector<address> slots;      // raw keys, sorted unique
    bool code_needed = false;
    std::uint32_t code_size = 0;     // witness sizing hint
};

struct state_list {
    std::vector<state_list_entry> entries;  // sorted by account

    const state_list_entry* find(const address& raw) const
    {
        for (const auto& e : entries)
            if (e.account == raw) return &e;
        return nullptr;
    }
};

// Maps protocol-level addresses into trie positions.  The hashed mode is
// the production rule (uniformizing, as account tries are keyed in
// practice); identity mode keeps literal positions for scripted scenarios.
struct key_mapper {
    int width = 32;
    bool hashed = true;

    address map(const address& raw) const
    {
        if (!hashed) return raw;
        bytes buf = raw.to_bytes();
        buf.push_back(static_cast<std::uint8_t>(raw.width()));
        digest d = sha256(buf);
        address out(width);
        for (int i = 0; i < width; ++i)
            out.set_bit(i, (d[static_cast<std::size_t>(i / 8)] >> (7 - i % 8)) & 1);
        return out;
    }
};

// Pre-state view a block executes against; the resolver fills it from
// owned storage, cache, and verified remote witnesses before execution.
struct exec_view {
    std::map<address, std::optional<account_record>> accounts;  // by state key
    std::map<std::pair<address, address>, std::optional<slot_value>> slots;
    std::set<digest> code_present;
};

struct exec_outcome {
    std::vector<account_write> writes;  // final post-block values, by state key
    state_list touched;                 // raw manifest derived from the trace
};

// Deterministic value for write ops that carry no literal.
inline std::uint64_t derived_write_value(std::uint64_t block_number, std::size_t tx_idx,
                                         std::size_t op_idx)
{
    return detail::mix64(detail::mix64(block_number) ^ detail::mix64(tx_idx * 0x10001 + op_idx));
}

// Applies the block's ops in transaction order against the resolved view.
// Every target must be present in the view; a miss is a resolver bug, not a
// network condition.
inline exec_outcome execute_block(const block& blk, exec_view& view, const key_mapper& mapper)
{
    exec_outcome out;
    struct touched_info {
        account_kind kind = account_kind::external;
        std::set<address> slots;
        bool code = false;
        std::uint32_t code_size = 0;
    };
    std::map<address, touched_info> touched;     // by raw address
    std::map<address, address> raw_of_key;       // staged write set index
    std::map<address, account_write> writes;     // by state key

    auto view_account = [&](const address& key) -> std::optional<account_record>& {
        auto it = view.accounts.find(key);
        if (it == view.accounts.end()) throw error("executor: unresolved account access");
        return it->second;
    };
    auto staged = [&](const address& key, const address& raw) -> account_write& {
        auto it = writes.find(key);
        if (it != writes.end()) return it->second;
        account_write w;
        w.key = key;
        const auto& rec = view_account(key);
        if (rec) {
            w.kind = rec->kind;
            w.nonce = rec->nonce;
            w.balance = rec->balance;
            w.code_hash = rec->code_hash;
        }
        raw_of_key[key] = raw;
        return writes.emplace(key, std::move(w)).first->second;
    };

    for (std::size_t t = 0; t < blk.txs.size(); ++t) {
        for (std::size_t o = 0; o < blk.txs[t].ops.size(); ++o) {
            const access_op& op = blk.txs[t].ops[o];
            const address key = mapper.map(op.account);
            auto& info = touched[op.account];
            switch (op.kind) {
            case op_kind::read_account: {
                const auto& rec = view_account(key);
                if (rec) info.kind = rec->kind;
                if (auto w = writes.find(key); w != writes.end()) info.kind = w->second.kind;
                break;
            }
            case op_kind::write_account: {
                auto& w = staged(key, op.account);
                w.balance = op.literal ? *op.literal : derived_write_value(blk.number, t, o);
                ++w.nonce;
                info.kind = w.kind;
                break;
            }
            case op_kind::read_slot: {
                const address skey = mapper.map(op.slot);
                if (!view.slots.count({key, skey}))
                    throw error("executor: unresolved slot access");
                info.kind = account_kind::contract;
                info.slots.insert(op.slot);
                break;
            }
            case op_kind::write_slot: {
                const address skey = mapper.map(op.slot);
                if (!view.slots.count({key, skey}))
                    throw error("executor: unresolved slot access");
                auto& w = staged(key, op.account);
                if (w.kind != account_kind::contract)
                    throw error("executor: slot write on a non-contract account");
                std::uint64_t v = op.literal ? *op.literal : derived_write_value(blk.number, t, o);
                slot_value sv = slot_value_from_u64(v);
                bool replaced = false;
                for (auto& [sk, old] : w.slot_writes)
                    if (sk == skey) {
                        old = sv;
                        replaced = true;
                        break;
                    }
                if (!replaced) w.slot_writes.emplace_back(skey, sv);
                view.slots[{key, skey}] = sv;
                info.kind = account_kind::contract;
                info.slots.insert(op.slot);
                break;
            }
            case op_kind::exec_code: {
                const auto& rec = view_account(key);
                if (!rec || !rec->is_contract())
                    throw error("executor: exec_code on a non-contract account");
                if (!view.code_present.count(rec->code_hash))
                    throw error("executor: code bytes not resident");
                info.kind = account_kind::contract;
                info.code = true;
                info.code_size = op.code_size;
                break;
            }
            }
        }
    }

    for (auto& [key, w] : writes) out.writes.push_back(std::move(w));
    for (auto& [raw, info] : touched) {
        state_list_entry e;
        e.account = raw;
        e.kind = info.kind;
        e.slots.assign(info.slots.begin(), info.slots.end());
        e.code_needed = info.code;
        e.code_size = info.code_size;
        out.touched.entries.push_back(std::move(e));
    }
    return out;
}

} // namespace statenet
