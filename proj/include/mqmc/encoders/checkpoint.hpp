#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mqmc/encoders/params.hpp"
#include "mqmc/membank/multi_queue.hpp"
#include "mqmc/numerics/optim.hpp"

namespace mqmc::enc {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct BankSnapshot {
    Side side = Side::Microvideo;
    bank::Keying keying = bank::Keying::ByMiddle;
    std::size_t capacity = 0;
    std::vector<int> queue_ids;
    std::vector<bank::QueueEntry> entries;
    std::uint64_t enqueued = 0, drawn = 0, evicted = 0;

    static BankSnapshot of(const bank::MultiQueue& q);
    bank::MultiQueue restore() const;
};

/// Everything needed to resume training or run evaluation. Tensors are
/// stored as 32-bit floats.
struct Checkpoint {
    std::uint64_t config_hash = 0;
    std::uint64_t step = 0;
    std::string config_text;
    ModelParams<float> params;
    std::map<std::string, num::AdamState<float>> adam;  // keyed "<role>/<tensor>"
    std::vector<BankSnapshot> banks;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mqmc::enc
