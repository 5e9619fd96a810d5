#pragma once

#include <array>
#include <bit>
#include <map>
#include <optional>

#include "messages.hpp"
#include "verkle_model.hpp"

namespace statenet {

enum class size_mode { merkle, verkle };

inline const char* mode_name(size_mode m)
{
    return m == size_mode::merkle ? "merkle" : "verkle";
}

// Bandwidth accounting categories.  Per-message category sums always equal
// the message total.
enum class byte_category : std::size_t {
    block_body,
    state_list,     // gossiped lists and state requests
    account_header,
    account_proof,
    slot_data,
    slot_proof,
    code,
    witness,        // verkle block witness
    lookup,         // search overhead
    control,        // ping/pong, snapshot/diff framing, markers
    count,
};

inline constexpr std::size_t byte_category_count = static_cast<std::size_t>(byte_category::count);

inline const char* category_name(byte_category c)
{
    static constexpr const char* names[] = {"block_body",    "state_list", "account_header",
                                            "account_proof", "slot_data",  "slot_proof",
                                            "code",          "witness",    "lookup",
                                            "control"};
    return names[static_cast<std::size_t>(c)];
}

struct byte_split {
    std::array<std::uint64_t, byte_category_count> by_category{};

    std::uint64_t& operator[](byte_category c) { return by_category[static_cast<std::size_t>(c)]; }
    std::uint64_t operator[](byte_category c) const
    {
        return by_category[static_cast<std::size_t>(c)];
    }

    std::uint64_t total() const
    {
        std::uint64_t t = 0;
        for (auto v : by_category) t += v;
        return t;
    }

    byte_split& operator+=(const byte_split& o)
    {
        for (std::size_t i = 0; i < byte_category_count; ++i) by_category[i] += o.by_category[i];
        return *this;
    }
};

// Nominal trie sizes used to charge proof bytes at a realistic scale while
// the simulation itself runs on desk-scale tries.  Keys are state keys.
struct nominal_sizes {
    std::uint64_t account_entries = 1ull << 28;
    std::map<address, std::uint64_t> contract_slots;

    std::uint64_t slots_for(const address& state_key) const
    {
        auto it = contract_slots.find(state_key);
        return it == contract_slots.end() ? 1024 : it->second;
    }
};

inline int ceil_log2(std::uint64_t n)
{
    if (n <= 1) return 0;
    return 64 - std::countl_zero(n - 1);
}

// Wire charge weights.  These are size charges, not field-accurate
// encodings; header totals follow the observed 60/124-byte account headers.
struct size_model {
    static constexpr const char* version = "sm-1";

    int width = 32;
    std::uint32_t external_header = 60;
    std::uint32_t contract_header = 124;
    std::uint32_t digest_bytes = 32;
    std::uint32_t address_bytes = 32;   // addresses and slot keys on the wire
    std::uint32_t slot_value = 32;      // response slot entries carry the value only
    std::uint32_t slot_record = 64;     // snapshots carry key + value
    std::uint32_t entry_overhead = 4;   // kind/flags/counts per list entry
    std::uint32_t absence_marker = 2;
    std::uint32_t block_header = 600;
    std::uint32_t tx_body = 120;
    std::uint32_t ping_bytes = 16;
    std::uint32_t lookup_candidate = 40;  // id, prefix length, endpoint

    verkle_witness_model verkle;

    std::uint32_t header_bytes(account_kind k) const
    {
        return k == account_kind::contract ? contract_header : external_header;
    }

    std::uint32_t proof_bytes_for_entries(std::uint64_t nominal_entries) const
    {
        int depth = std::min(ceil_log2(nominal_entries), width);
        return static_cast<std::uint32_t>(32 * depth + proof_framing_bytes(width));
    }

    std::uint32_t list_entry_bytes(std::size_t slot_keys) const
    {
        return address_bytes + entry_overhead
               + static_cast<std::uint32_t>(slot_keys) * address_bytes;
    }
};

// Byte size and category split of one message.  Proof bytes are charged at
// the nominal trie scale when `nominals` is given, and at the carried
// proofs' literal wire size otherwise (scripted scenarios).
inline byte_split message_bytes(const message& msg, size_mode mode, const size_model& model,
                                const nominal_sizes* nominals)
{
    byte_split out;
    auto account_proof_bytes = [&](const merkle_proof& p) -> std::uint64_t {
        if (nominals) return model.proof_bytes_for_entries(nominals->account_entries);
        return p.wire_size();
    };
    auto slot_proof_bytes = [&](const address& state_key, const merkle_proof& p) -> std::uint64_t {
        if (nominals) return model.proof_bytes_for_entries(nominals->slots_for(state_key));
        return p.wire_size();
    };
    auto add_witness_items = [&](const std::vector<account_witness>& items) {
        std::set<digest> code_seen;
        for (const auto& w : items) {
            if (w.record) {
                out[byte_category::account_header] += model.header_bytes(w.record->kind);
            } else {
                out[byte_category::account_header] += model.absence_marker;
            }
            if (mode == size_mode::merkle)
                out[byte_category::account_proof] += account_proof_bytes(w.account_proof);
            for (const auto& s : w.slots) {
                out[byte_category::slot_data] += model.slot_value;
                if (mode == size_mode::merkle)
                    out[byte_category::slot_proof] += slot_proof_bytes(w.key, s.proof);
            }
            if (w.code && code_seen.insert(w.record ? w.record->code_hash : zero_digest).second)
                out[byte_category::code] += w.code->size();
        }
    };

    std::visit(
        [&](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, msg_block_announce>) {
                out[byte_category::block_body] =
                    model.block_header + model.tx_body * m.blk.txs.size();
                for (const auto& e : m.list.entries)
                    out[byte_category::state_list] += model.list_entry_bytes(e.slots.size());
                if (mode == size_mode::verkle)
                    out[byte_category::witness] += static_cast<std::uint64_t>(
                        std::llround(model.verkle.witness_for_list(m.list)));
            } else if constexpr (std::is_same_v<T, msg_state_request>) {
                for (const auto& e : m.wanted)
                    out[byte_category::state_list] += model.list_entry_bytes(e.slots.size());
            } else if constexpr (std::is_same_v<T, msg_state_response>) {
                add_witness_items(m.items);
                out[byte_category::control] += model.address_bytes * m.not_held.size();
            } else if constexpr (std::is_same_v<T, msg_ping> || std::is_same_v<T, msg_pong>) {
                out[byte_category::control] += model.ping_bytes;
            } else if constexpr (std::is_same_v<T, msg_lookup_request>) {
                out[byte_category::lookup] += model.list_entry_bytes(m.slots.size());
            } else if constexpr (std::is_same_v<T, msg_lookup_response>) {
                out[byte_category::lookup] +=
                    model.entry_overhead + model.lookup_candidate * m.candidates.size();
                if (m.payload) {
                    std::vector<account_witness> one = {*m.payload};
                    add_witness_items(one);
                }
            } else if constexpr (std::is_same_v<T, msg_snapshot_request>) {
                out[byte_category::control] += model.address_bytes + model.entry_overhead;
            } else if constexpr (std::is_same_v<T, msg_snapshot_response>) {
                out[byte_category::control] += model.entry_overhead;
                if (m.held) {
                    for (const auto& e : m.snap.entries) {
                        out[byte_category::account_header] += model.header_bytes(e.record.kind);
                        out[byte_category::slot_data] += model.slot_record * e.slots.size();
                    }
                    out[byte_category::account_proof] +=
                        model.digest_bytes * m.snap.proof_path.size();
                    for (const auto& [h, blob] : m.snap.code)
                        out[byte_category::code] += blob->size();
                }
            } else if constexpr (std::is_same_v<T, msg_diff_request>) {
                out[byte_category::control] += model.address_bytes + model.entry_overhead;
            } else if constexpr (std::is_same_v<T, msg_diff_response>) {
                out[byte_category::control] += model.entry_overhead + 3 * model.digest_bytes;
            } else if constexpr (std::is_same_v<T, msg_blob>) {
                out[byte_category::block_body] += m.size_bytes;
            }
        },
        msg);
    return out;
}

} // namespace statenet
