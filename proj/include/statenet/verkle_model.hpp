#pragma once

#include <cmath>
#include <cstdint>

#include "block.hpp"
#include "rng.hpp"

namespace statenet {

// Size-only model of a Verkle block witness.  Values live in 256-wide
// stems; an account's header, its first slots and first code chunks share
// the account stem, overflow spills into extra stems.  Proving one extra
// value in an already-proven stem costs 32/255 bytes amortized, so the
// 1-value vs 256-value same-stem delta is exactly 32 bytes.  The per-stem
// and block-base constants are fitted to the published mean block witness
// (623.57 KB witness / 2156.83 KB total) and are a model, not cryptography.
struct verkle_witness_model {
    double block_base = 2560.0;
    double stem_cost = 1142.8027;
    int stem_width = 256;
    int slots_in_account_stem = 64;
    int chunks_in_account_stem = 128;
    int code_chunk_bytes = 31;
    int header_values = 4;

    struct access_summary {
        std::uint64_t stems = 0;
        std::uint64_t values = 0;
    };

    // One touched account: header values, `slots` touched slots and, when
    // code is executed, its chunked code.
    access_summary account_summary(bool contract, std::uint64_t slots, bool code,
                                   std::uint64_t code_bytes) const
    {
        access_summary s;
        s.stems = 1;
        s.values = static_cast<std::uint64_t>(header_values);
        if (contract) {
            s.values += slots;
            if (slots > static_cast<std::uint64_t>(slots_in_account_stem))
                s.stems += ceil_div(slots - slots_in_account_stem,
                                    static_cast<std::uint64_t>(stem_width));
            if (code && code_bytes > 0) {
                std::uint64_t chunks = ceil_div(code_bytes, static_cast<std::uint64_t>(code_chunk_bytes));
                s.values += chunks;
                if (chunks > static_cast<std::uint64_t>(chunks_in_account_stem))
                    s.stems += ceil_div(chunks - chunks_in_account_stem,
                                        static_cast<std::uint64_t>(stem_width));
            }
        }
        return s;
    }

    double witness_bytes(const access_summary& s) const
    {
        if (s.stems == 0) return 0.0;
        double extras = static_cast<double>(s.values - s.stems);
        return block_base + static_cast<double>(s.stems) * stem_cost + extras * 32.0 / 255.0;
    }

    // Witness for a whole block given its state list.
    double witness_for_list(const state_list& list) const
    {
        access_summary total;
        for (const auto& e : list.entries) {
            auto s = account_summary(e.kind == account_kind::contract, e.slots.size(),
                                     e.code_needed, e.code_size);
            total.stems += s.stems;
            total.values += s.values;
        }
        return witness_bytes(total);
    }
};

// The published mean block's access profile at full scale: 158 external +
// 190 contract accounts (33.04 KB of headers), 2240 slots (71.69 KB at 32 B
// each), 1428.53 KB of code.  Used to pin the model constants.
inline state_list table1_scale_access_set()
{
    state_list list;
    rng r(0x7ab1e1);
    const int width = 32;
    for (int i = 0; i < 158; ++i) {
        state_list_entry e;
        e.account = r.random_address(width);
        e.kind = account_kind::external;
        list.entries.push_back(std::move(e));
    }
    int slots_left = 2240;
    for (int i = 0; i < 190; ++i) {
        state_list_entry e;
        e.account = r.random_address(width);
        e.kind = account_kind::contract;
        int take = i < 150 ? 12 : 11;
        slots_left -= take;
        for (int s = 0; s < take; ++s) e.slots.push_back(r.random_address(width));
        e.code_needed = true;
        e.code_size = i < 110 ? 7519 : 7518;  // sums to 1,428,530
        list.entries.push_back(std::move(e));
    }
    (void)slots_left;
    return list;
}

} // namespace statenet
