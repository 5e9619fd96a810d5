#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "address.hpp"
#include "hash.hpp"
#include "merkle_trie.hpp"

namespace statenet {

using slot_value = std::array<std::uint8_t, 32>;
using code_blob = std::shared_ptr<const bytes>;

enum class account_kind : std::uint8_t { external = 0, contract = 1 };

// Header of one account.  The canonical serialization below feeds the trie
// leaf digest; transmitted and stored sizes are charged through the size
// model instead (60 bytes external, 124 contract).
struct account_record {
    account_kind kind = account_kind::external;
    std::uint64_t nonce = 0;
    std::uint64_t balance = 0;
    digest storage_root = zero_digest;  // contract only
    digest code_hash = zero_digest;     // contract only

    bool is_contract() const { return kind == account_kind::contract; }

    bytes serialize() const
    {
        bytes out;
        out.push_back(static_cast<std::uint8_t>(kind));
        put_u64_be(out, nonce);
        put_u64_be(out, balance);
        if (is_contract()) {
            out.insert(out.end(), storage_root.begin(), storage_root.end());
            out.insert(out.end(), code_hash.begin(), code_hash.end());
        }
        return out;
    }

    static account_record parse(byte_view in)
    {
        if (in.size() != 17 && in.size() != 81) throw parse_error("bad account record length");
        account_record r;
        r.kind = static_cast<account_kind>(in[0]);
        r.nonce = get_u64_be(in, 1);
        r.balance = get_u64_be(in, 9);
        if (in.size() == 81) {
            std::copy(in.begin() + 17, in.begin() + 49, r.storage_root.begin());
            std::copy(in.begin() + 49, in.begin() + 81, r.code_hash.begin());
        }
        return r;
    }

    friend bool operator==(const account_record&, const account_record&) = default;
};

// One slot with its proof against the owning account's storage root.
struct proven_slot {
    address key;                      // slot state key
    std::optional<slot_value> value;  // nullopt = proven absent
    merkle_proof proof;
};

// Provable bundle for one account: record (or proven absence) with a proof
// against the global root, requested slots with proofs against the record's
// storage root, and the contract code when included.
struct account_witness {
    address key;  // account state key
    std::optional<account_record> record;
    merkle_proof account_proof;
    std::vector<proven_slot> slots;
    code_blob code;  // null when not included

    bytes record_bytes() const { return record ? record->serialize() : bytes{}; }
};

template <class H>
bool verify_account_witness(const digest& global_root, const account_witness& w)
{
    std::optional<byte_view> leaf;
    bytes rb;
    if (w.record) {
        rb = w.record->serialize();
        leaf = byte_view(rb);
    }
    if (!verify_proof<H>(global_root, leaf, w.account_proof)) return false;
    const digest storage_root = w.record ? w.record->storage_root : zero_digest;
    for (const auto& s : w.slots) {
        std::optional<byte_view> sv;
        if (s.value) sv = byte_view(s.value->data(), s.value->size());
        if (!verify_proof<H>(storage_root, sv, s.proof)) return false;
    }
    if (w.code && w.record && w.record->is_contract()) {
        if (H::hash(*w.code) != w.record->code_hash) return false;
    }
    return true;
}

// Post-execution final values for one account; apply_block_writes derives
// the new storage root and leaf digest from these.
struct account_write {
    address key;  // account state key
    account_kind kind = account_kind::external;
    std::uint64_t nonce = 0;
    std::uint64_t balance = 0;
    digest code_hash = zero_digest;
    std::vector<std::pair<address, slot_value>> slot_writes;
};

inline slot_value slot_value_from_u64(std::uint64_t v)
{
    slot_value sv{};
    for (int i = 0; i < 8; ++i) sv[static_cast<std::size_t>(24 + i)] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
    return sv;
}

inline std::uint64_t slot_value_to_u64(const slot_value& sv)
{
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = v << 8 | sv[static_cast<std::size_t>(24 + i)];
    return v;
}

} // namespace statenet
