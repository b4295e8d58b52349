#include "mqmc/encoders/params.hpp"

#include <cmath>
#include <cstring>

#include "mqmc/numerics/random.hpp"

namespace mqmc::enc {

const char* role_name(Role role) {
    switch (role) {
        case Role::ProjectorMvVisual: return "projector-mv-visual";
        case Role::ProjectorMvText: return "projector-mv-text";
        case Role::ProjectorProdVisual: return "projector-prod-visual";
        case Role::ProjectorProdText: return "projector-prod-text";
        case Role::FusionMv: return "fusion-mv";
        case Role::FusionProd: return "fusion-prod";
        case Role::EncoderMvQuery: return "encoder-mv-query";
        case Role::EncoderMvKey: return "encoder-mv-key";
        case Role::EncoderProdQuery: return "encoder-prod-query";
        case Role::EncoderProdKey: return "encoder-prod-key";
    }
    return "?";
}

Role role_from_name(const std::string& name) {
    for (Role r : kAllRoles) {
        if (name == role_name(r)) return r;
    }
    throw ShapeError("unknown parameter role '" + name + "'");
}

bool is_key_role(Role role) { return role == Role::EncoderMvKey || role == Role::EncoderProdKey; }

bool is_projector(Role role) {
    return role == Role::ProjectorMvVisual || role == Role::ProjectorMvText || role == Role::ProjectorProdVisual ||
           role == Role::ProjectorProdText;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= kFnvPrime;
    }
}

template <typename T>
void hash_tensors(std::uint64_t& h, const std::map<std::string, Tensor<T>>& tensors) {
    for (const auto& [name, t] : tensors) {
        fnv(h, name.data(), name.size());
        for (std::size_t e : t.shape()) fnv(h, &e, sizeof e);
        fnv(h, t.data(), t.size() * sizeof(T));
    }
}

template <typename T>
Tensor<T> uniform_weight(num::Rng& rng, std::size_t out, std::size_t in) {
    const double bound = std::sqrt(1.0 / static_cast<double>(in));
    Tensor<T> w = Tensor<T>::matrix(out, in);
    for (T& v : w.values()) {
        T x = static_cast<T>(rng.uniform(-bound, bound));
        // rounding to float may land a hair outside the bound
        if (std::abs(static_cast<double>(x)) > bound) x = std::nextafter(x, T{0});
        v = x;
    }
    return w;
}

}  // namespace

template <typename T>
std::size_t ParamSet<T>::parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.size();
    return n;
}

template <typename T>
std::uint64_t ParamSet<T>::hash() const {
    std::uint64_t h = kFnvOffset;
    const std::string r = role_name(role);
    fnv(h, r.data(), r.size());
    hash_tensors(h, tensors);
    hash_tensors(h, buffers);
    return h;
}

template <typename T>
std::uint64_t ModelParams<T>::hash() const {
    std::uint64_t h = kFnvOffset;
    for (const auto& [role, set] : sets) {
        const std::uint64_t s = set.hash();
        fnv(h, &s, sizeof s);
    }
    return h;
}

template <typename T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed) {
    if (dims.visual_in == 0 || dims.text_in == 0 || dims.hidden == 0 || dims.refined == 0 || dims.fused == 0) {
        throw ShapeError("init_params: all dimensions must be positive");
    }
    ModelParams<T> params;
    std::uint64_t salt = 0;
    auto make = [&](Role role) -> ParamSet<T>& {
        ParamSet<T>& s = params.sets[role];
        s.role = role;
        s.trainable = !is_key_role(role);
        return s;
    };
    auto projector = [&](Role role, std::size_t in) {
        num::Rng rng(num::mix_seed(seed, salt++));
        ParamSet<T>& s = make(role);
        s.tensors["W1"] = uniform_weight<T>(rng, dims.hidden, in);
        s.tensors["W2"] = uniform_weight<T>(rng, dims.refined, dims.hidden);
        if (dims.projector_batch_norm) {
            s.tensors["bn_gamma"] = Tensor<T>(num::Shape{dims.hidden}, T{1});
            s.tensors["bn_beta"] = Tensor<T>(num::Shape{dims.hidden}, T{0});
            s.buffers["bn_mean"] = Tensor<T>(num::Shape{dims.hidden}, T{0});
            s.buffers["bn_var"] = Tensor<T>(num::Shape{dims.hidden}, T{1});
        }
    };
    auto fusion = [&](Role role) {
        num::Rng rng(num::mix_seed(seed, salt++));
        ParamSet<T>& s = make(role);
        s.tensors["W1"] = uniform_weight<T>(rng, dims.fused, dims.refined);
        s.tensors["W2"] = uniform_weight<T>(rng, dims.fused, dims.refined);
        s.tensors["W3"] = uniform_weight<T>(rng, dims.fused, dims.fused);
    };
    auto encoder = [&](Role query, Role key) {
        num::Rng rng(num::mix_seed(seed, salt++));
        ParamSet<T>& q = make(query);
        q.tensors["W1"] = uniform_weight<T>(rng, dims.fused, dims.fused);
        q.tensors["W2"] = uniform_weight<T>(rng, dims.fused, dims.fused);
        ParamSet<T>& k = make(key);
        k.tensors = q.tensors;
    };

    projector(Role::ProjectorMvVisual, dims.visual_in);
    projector(Role::ProjectorMvText, dims.text_in);
    projector(Role::ProjectorProdVisual, dims.visual_in);
    projector(Role::ProjectorProdText, dims.text_in);
    fusion(Role::FusionMv);
    fusion(Role::FusionProd);
    encoder(Role::EncoderMvQuery, Role::EncoderMvKey);
    encoder(Role::EncoderProdQuery, Role::EncoderProdKey);
    return params;
}

template <typename T>
void momentum_update(ParamSet<T>& key, const ParamSet<T>& query, double m) {
    if (!(m >= 0.0 && m < 1.0)) throw ShapeError("momentum_update: m must lie in [0,1)");
    if (key.tensors.size() != query.tensors.size()) throw ShapeError("momentum_update: parameter sets differ");
    for (auto& [name, k] : key.tensors) {
        auto it = query.tensors.find(name);
        if (it == query.tensors.end() || it->second.shape() != k.shape()) {
            throw ShapeError("momentum_update: shape mismatch on '" + name + "'");
        }
        const Tensor<T>& q = it->second;
        for (std::size_t i = 0; i < k.size(); ++i) {
            k[i] = static_cast<T>(m * static_cast<double>(k[i]) + (1.0 - m) * static_cast<double>(q[i]));
        }
    }
}

template struct ParamSet<float>;
template struct ParamSet<double>;
template struct ModelParams<float>;
template struct ModelParams<double>;
template ModelParams<float> init_params<float>(const ModelDims&, std::uint64_t);
template ModelParams<double> init_params<double>(const ModelDims&, std::uint64_t);
template void momentum_update<float>(ParamSet<float>&, const ParamSet<float>&, double);
template void momentum_update<double>(ParamSet<double>&, const ParamSet<double>&, double);

}  // namespace mqmc::enc
