#include "mqmc/harness/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <vector>

namespace mqmc::harness {

const char* queue_mode_name(QueueMode m) { return m == QueueMode::Multi ? "multi" : "single"; }
const char* importance_mode_name(ImportanceMode m) { return m == ImportanceMode::Scored ? "scored" : "unit"; }

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size()) {
        throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::string num(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void apply_setting(TrainConfig& cfg, const std::string& key, const std::string& value) {
    const std::string& v = value;
    if (key == "hidden") cfg.dims.hidden = to_uint(key, v);
    else if (key == "refined_dim") cfg.dims.refined = to_uint(key, v);
    else if (key == "fused_dim") cfg.dims.fused = to_uint(key, v);
    else if (key == "leaky_slope") cfg.dims.leaky_slope = to_double(key, v);
    else if (key == "batch_norm") cfg.dims.projector_batch_norm = to_bool(key, v);
    else if (key == "alpha") cfg.weights.alpha = to_double(key, v);
    else if (key == "beta") cfg.weights.beta = to_double(key, v);
    else if (key == "delta") cfg.weights.delta = to_double(key, v);
    else if (key == "tau") cfg.weights.tau = to_double(key, v);
    else if (key == "zeta") cfg.weights.zeta = to_double(key, v);
    else if (key == "momentum") cfg.momentum = to_double(key, v);
    else if (key == "batch_size") cfg.batch_size = to_uint(key, v);
    else if (key == "queue_length") cfg.queue_length = to_uint(key, v);
    else if (key == "lr") cfg.lr = to_double(key, v);
    else if (key == "weight_decay") cfg.weight_decay = to_double(key, v);
    else if (key == "steps") cfg.steps = to_uint(key, v);
    else if (key == "eval_interval") cfg.eval_interval = to_uint(key, v);
    else if (key == "param_seed") cfg.param_seed = to_uint(key, v);
    else if (key == "shuffle_seed") cfg.shuffle_seed = to_uint(key, v);
    else if (key == "split_seed") cfg.split_seed = to_uint(key, v);
    else if (key == "queue_mode") {
        if (v == "multi") cfg.queue_mode = QueueMode::Multi;
        else if (v == "single") cfg.queue_mode = QueueMode::Single;
        else throw ConfigError("config: queue_mode must be multi or single, got '" + v + "'");
    } else if (key == "importance_mode") {
        if (v == "scored") cfg.importance_mode = ImportanceMode::Scored;
        else if (v == "unit") cfg.importance_mode = ImportanceMode::Unit;
        else throw ConfigError("config: importance_mode must be scored or unit, got '" + v + "'");
    } else if (key == "modality") {
        try {
            cfg.modality = enc::modality_from_name(v);
        } catch (const std::exception&) {
            throw ConfigError("config: modality must be all, visual-only or text-only, got '" + v + "'");
        }
    } else {
        throw ConfigError("config: unknown key '" + key + "'");
    }
}

void TrainConfig::validate() const {
    try {
        weights.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (dims.hidden == 0 || dims.refined == 0 || dims.fused == 0) throw ConfigError("config: dimensions must be positive");
    if (!(dims.leaky_slope > 0.0 && dims.leaky_slope < 1.0)) throw ConfigError("config: leaky_slope must be in (0,1)");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("config: momentum must be in [0,1)");
    if (batch_size < 2) throw ConfigError("config: batch_size must be at least 2");
    if (queue_length == 0) throw ConfigError("config: queue_length must be positive");
    if (!(lr >= 0.0)) throw ConfigError("config: lr must be non-negative");
    if (!(weight_decay >= 0.0)) throw ConfigError("config: weight_decay must be non-negative");
    if (eval_interval == 0) throw ConfigError("config: eval_interval must be positive");
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os << "hidden = " << dims.hidden << "\n"
       << "refined_dim = " << dims.refined << "\n"
       << "fused_dim = " << dims.fused << "\n"
       << "leaky_slope = " << num(dims.leaky_slope) << "\n"
       << "batch_norm = " << (dims.projector_batch_norm ? "true" : "false") << "\n"
       << "alpha = " << num(weights.alpha) << "\n"
       << "beta = " << num(weights.beta) << "\n"
       << "delta = " << num(weights.delta) << "\n"
       << "tau = " << num(weights.tau) << "\n"
       << "zeta = " << num(weights.zeta) << "\n"
       << "momentum = " << num(momentum) << "\n"
       << "batch_size = " << batch_size << "\n"
       << "queue_length = " << queue_length << "\n"
       << "lr = " << num(lr) << "\n"
       << "weight_decay = " << num(weight_decay) << "\n"
       << "steps = " << steps << "\n"
       << "eval_interval = " << eval_interval << "\n"
       << "param_seed = " << param_seed << "\n"
       << "shuffle_seed = " << shuffle_seed << "\n"
       << "split_seed = " << split_seed << "\n"
       << "queue_mode = " << queue_mode_name(queue_mode) << "\n"
       << "importance_mode = " << importance_mode_name(importance_mode) << "\n"
       << "modality = " << enc::modality_name(modality) << "\n";
    return os.str();
}

std::uint64_t TrainConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : to_text()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty() || line.front() == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config: line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        if (key.empty()) throw ConfigError("config: line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) {
            throw ConfigError("config: line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

TrainConfig parse_config(const std::string& text) {
    TrainConfig cfg;
    for (const auto& [k, v] : parse_key_values(text)) apply_setting(cfg, k, v);
    cfg.validate();
    return cfg;
}

TrainConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

}  // namespace mqmc::harness
