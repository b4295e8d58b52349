#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>

#include "mqmc/contrast/losses.hpp"
#include "mqmc/encoders/network.hpp"
#include "mqmc/membank/multi_queue.hpp"

namespace mqmc::harness {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class QueueMode { Multi, Single };
enum class ImportanceMode { Scored, Unit };

const char* queue_mode_name(QueueMode m);
const char* importance_mode_name(ImportanceMode m);

struct TrainConfig {
    enc::ModelDims dims;  // visual_in / text_in are taken from the dataset
    con::LossWeights weights;
    double momentum = 0.999;
    std::size_t batch_size = 64;
    std::size_t queue_length = 192;
    double lr = 1e-4;
    double weight_decay = 1e-3;
    std::uint64_t steps = 1200;
    std::uint64_t eval_interval = 200;
    std::uint64_t param_seed = 1;
    std::uint64_t shuffle_seed = 1;
    std::uint64_t split_seed = 1;
    QueueMode queue_mode = QueueMode::Multi;
    ImportanceMode importance_mode = ImportanceMode::Scored;
    enc::Modality modality = enc::Modality::All;

    void validate() const;

    /// Canonical `key = value` text, one key per line in a fixed order.
    std::string to_text() const;
    /// FNV-1a of to_text().
    std::uint64_t hash() const;

    bank::Keying keying() const {
        return queue_mode == QueueMode::Multi ? bank::Keying::ByMiddle : bank::Keying::Single;
    }
};

/// Sets one documented key from its text value. Throws ConfigError on an
/// unknown key or an unparsable value.
void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value);

/// Parses `key = value` lines. Blank lines, `#` comments and `[section]`
/// headers are ignored; values may be double-quoted.
std::map<std::string, std::string> parse_key_values(const std::string& text);

TrainConfig parse_config(const std::string& text);
TrainConfig load_config(const std::string& path);

}  // namespace mqmc::harness
