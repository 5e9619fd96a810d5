#pragma once

#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "block.hpp"
#include "rng.hpp"

namespace statenet {

// Replayable access trace: the workload input to every simulation and
// bandwidth experiment.  Line format (docs/formats.md):
//
//   # statenet-trace v1 width=<B>
//   block,tx,op,address_hex,key_hex,size
//
// op is one of ra,wa,rs,ws,xc; key_hex holds the slot key for rs/ws and the
// code blob id for xc; size is the code byte count for xc and 0 otherwise.
struct access_trace {
    int width = 32;
    std::vector<block> blocks;  // post roots not filled; txs only

    std::size_t tx_count() const
    {
        std::size_t n = 0;
        for (const auto& b : blocks) n += b.txs.size();
        return n;
    }
};

inline const char* op_token(op_kind k)
{
    switch (k) {
    case op_kind::read_account: return "ra";
    case op_kind::write_account: return "wa";
    case op_kind::read_slot: return "rs";
    case op_kind::write_slot: return "ws";
    case op_kind::exec_code: return "xc";
    }
    return "??";
}

inline op_kind op_from_token(const std::string& t, std::size_t line)
{
    if (t == "ra") return op_kind::read_account;
    if (t == "wa") return op_kind::write_account;
    if (t == "rs") return op_kind::read_slot;
    if (t == "ws") return op_kind::write_slot;
    if (t == "xc") return op_kind::exec_code;
    throw parse_error("unknown op token '" + t + "'", line);
}

inline std::string emit_trace(const access_trace& tr)
{
    std::string out = "# statenet-trace v1 width=" + std::to_string(tr.width) + "\n";
    char buf[160];
    for (const auto& b : tr.blocks) {
        for (std::size_t t = 0; t < b.txs.size(); ++t) {
            for (const auto& op : b.txs[t].ops) {
                std::string key;
                if (op.kind == op_kind::read_slot || op.kind == op_kind::write_slot)
                    key = op.slot.to_hex();
                else if (op.kind == op_kind::exec_code)
                    key = address::from_u64(64, op.code_id).to_hex();
                std::snprintf(buf, sizeof buf, "%llu,%zu,%s,%s,%s,%u\n",
                              static_cast<unsigned long long>(b.number), t, op_token(op.kind),
                              op.account.to_hex().c_str(), key.c_str(), op.code_size);
                out += buf;
            }
        }
    }
    return out;
}

inline access_trace parse_trace(const std::string& text)
{
    access_trace tr;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line)) return tr;
    ++lineno;
    {
        std::istringstream hdr(line);
        std::string tag, name, ver, widthkv;
        hdr >> tag >> name >> ver >> widthkv;
        if (tag != "#" || name != "statenet-trace" || ver != "v1"
            || widthkv.rfind("width=", 0) != 0)
            throw parse_error("bad trace header", lineno);
        tr.width = std::stoi(widthkv.substr(6));
        if (tr.width < 1 || tr.width > address::max_width)
            throw schema_error("trace width out of range", lineno);
    }

    block* cur = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::array<std::string, 6> f;
        std::size_t start = 0, fi = 0;
        for (; fi < 6; ++fi) {
            auto comma = line.find(',', start);
            if (comma == std::string::npos) {
                if (fi != 5) throw parse_error("expected 6 fields", lineno);
                f[fi] = line.substr(start);
                break;
            }
            f[fi] = line.substr(start, comma - start);
            start = comma + 1;
        }
        std::uint64_t bn = 0;
        std::size_t tx = 0;
        try {
            bn = std::stoull(f[0]);
            tx = std::stoull(f[1]);
        } catch (const std::exception&) {
            throw parse_error("bad block/tx index", lineno);
        }
        access_op op;
        op.kind = op_from_token(f[2], lineno);
        try {
            op.account = address::from_hex(tr.width, f[3]);
        } catch (const schema_error&) {
            throw schema_error("address exceeds trace width", lineno);
        }
        if (op.kind == op_kind::read_slot || op.kind == op_kind::write_slot) {
            try {
                op.slot = address::from_hex(tr.width, f[4]);
            } catch (const schema_error&) {
                throw schema_error("slot key exceeds trace width", lineno);
            }
        } else if (op.kind == op_kind::exec_code) {
            op.code_id = address::from_hex(64, f[4]).to_u64();
        } else if (!f[4].empty()) {
            throw parse_error("unexpected key field", lineno);
        }
        op.code_size = static_cast<std::uint32_t>(std::stoul(f[5]));

        if (!cur || cur->number != bn) {
            tr.blocks.push_back({});
            cur = &tr.blocks.back();
            cur->number = bn;
        }
        while (cur->txs.size() <= tx) cur->txs.push_back({});
        cur->txs[tx].ops.push_back(std::move(op));
    }
    return tr;
}

// --- genesis derivation ----------------------------------------------------
//
// A trace determines its own genesis: every referenced account exists with
// deterministic balances, every slot key read or written is seeded, contract
// code comes from the blob id, and each contract's nominal trie size (used
// for proof-size charging) follows from its observed access count.

struct genesis_account {
    address raw;
    account_kind kind = account_kind::external;
    std::uint64_t access_count = 0;
    std::uint64_t code_id = 0;
    std::uint32_t code_size = 0;
    std::set<address> slot_keys;  // raw
};

struct genesis_spec {
    int width = 32;
    std::map<address, genesis_account> accounts;  // by raw address
    std::map<std::uint64_t, std::uint32_t> code_blobs;  // id -> bytes

    // Nominal slot-trie entries for proof charging: scaled from observed
    // accesses, clamped to [1024, 2^24].
    static std::uint64_t nominal_slots(std::uint64_t access_count)
    {
        std::uint64_t n = 4096 * access_count;
        if (n < 1024) n = 1024;
        if (n > (1ull << 24)) n = 1ull << 24;
        return n;
    }
};

inline genesis_spec derive_genesis(const access_trace& tr)
{
    genesis_spec g;
    g.width = tr.width;
    for (const auto& b : tr.blocks) {
        for (const auto& tx : b.txs) {
            for (const auto& op : tx.ops) {
                auto& acct = g.accounts[op.account];
                acct.raw = op.account;
                ++acct.access_count;
                switch (op.kind) {
                case op_kind::read_slot:
                case op_kind::write_slot:
                    acct.kind = account_kind::contract;
                    acct.slot_keys.insert(op.slot);
                    break;
                case op_kind::exec_code:
                    acct.kind = account_kind::contract;
                    acct.code_id = op.code_id;
                    acct.code_size = op.code_size;
                    g.code_blobs[op.code_id] = op.code_size;
                    break;
                default:
                    break;
                }
            }
        }
    }
    return g;
}

inline std::uint64_t genesis_balance(const address& raw)
{
    bytes buf = raw.to_bytes();
    buf.push_back('b');
    return get_u64_be(sha256(buf), 0) >> 24;
}

inline slot_value genesis_slot_value(const address& raw_acct, const address& raw_key)
{
    bytes buf = raw_acct.to_bytes();
    bytes kb = raw_key.to_bytes();
    buf.insert(buf.end(), kb.begin(), kb.end());
    buf.push_back('s');
    digest d = sha256(buf);
    slot_value v{};
    std::copy(d.begin(), d.end(), v.begin());
    return v;
}

// Deterministic pseudo-bytes for a code blob.
inline code_blob make_code_blob(std::uint64_t code_id, std::uint32_t size)
{
    bytes body(size);
    std::uint64_t x = detail::mix64(code_id ^ 0xc0deull);
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (i % 8 == 0) x = detail::mix64(x);
        body[i] = static_cast<std::uint8_t>(x >> (8 * (i % 8)));
    }
    return std::make_shared<const bytes>(std::move(body));
}

} // namespace statenet
