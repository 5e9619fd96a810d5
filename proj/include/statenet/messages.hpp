#pragma once

#include <optional>
#include <variant>
#include <vector>

#include "account.hpp"
#include "block.hpp"
#include "partial_state.hpp"

namespace statenet {

struct msg_block_announce {
    block blk;
    state_list list;
};

struct wanted_entry {
    address account;               // raw
    bool all_slots = false;        // unspecified slot set -> everything
    std::vector<address> slots;    // raw keys
    bool code = false;
};

struct msg_state_request {
    std::uint64_t block_number = 0;
    std::vector<wanted_entry> wanted;
};

struct msg_state_response {
    std::uint64_t block_number = 0;
    std::vector<account_witness> items;   // keys are state keys
    std::vector<address> not_held;        // raw addresses the sender lacks
};

struct msg_ping {};
struct msg_pong {};

struct msg_lookup_request {
    std::uint64_t lookup_id = 0;
    address target;                // state key
    std::vector<address> slots;    // state keys wanted (empty + all=false: none)
    bool all_slots = false;
    bool code = false;
};

struct msg_lookup_response {
    std::uint64_t lookup_id = 0;
    bool found = false;
    std::optional<account_witness> payload;
    std::vector<node_identity> candidates;
};

struct msg_snapshot_request {
    address path;
    int path_len = 0;
};

struct msg_snapshot_response {
    bool held = false;
    state_snapshot snap;
};

struct msg_diff_request {
    address path;
    int path_len = 0;
};

struct msg_diff_response {
    bool held = false;
    address path;
    int path_len = 0;
    diff_result digests;
};

// Propagation-experiment payload: an opaque blob of a configured size.
struct msg_blob {
    std::uint64_t id = 0;
    std::uint64_t size_bytes = 0;
};

using message = std::variant<msg_block_announce, msg_state_request, msg_state_response, msg_ping,
                             msg_pong, msg_lookup_request, msg_lookup_response,
                             msg_snapshot_request, msg_snapshot_response, msg_diff_request,
                             msg_diff_response, msg_blob>;

} // namespace statenet
