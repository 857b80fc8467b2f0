#pragma once

#include "bnn/net.hpp"

#include <string>

namespace bnn {

struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Checkpoint {
    TrainState state;
    int64_t epochs_done = 0;
    double norm_mean = 0.0;
    double norm_std = 1.0;
    uint64_t config_hash = 0;
};

/// Exact binary serialization of the checkpoint payload; two states are
/// identical iff their payloads are byte-identical.
std::string serialize_state(const Checkpoint& ck);

// Container "BNCK" v1: magic, version u16, config hash u64, payload size u64,
// FNV-1a checksum u64, payload. Holds factors only; decomposed layers carry
// no reconstructed weight buffer.
void save_checkpoint(const Checkpoint& ck, const std::string& path);

/// Verifies magic, version, and checksum before any state is built; a
/// tampered file throws and yields nothing partial. If expected_config_hash
/// is nonzero it must match the stored one.
Checkpoint load_checkpoint(const std::string& path, uint64_t expected_config_hash = 0);

uint64_t file_hash(const std::string& path);

}  // namespace bnn
