#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>

#include "mqmc/numerics/tensor.hpp"

namespace mqmc::enc {

using num::Tensor;

enum class Role {
    ProjectorMvVisual,
    ProjectorMvText,
    ProjectorProdVisual,
    ProjectorProdText,
    FusionMv,
    FusionProd,
    EncoderMvQuery,
    EncoderMvKey,
    EncoderProdQuery,
    EncoderProdKey,
};

inline constexpr std::array<Role, 10> kAllRoles = {
    Role::ProjectorMvVisual, Role::ProjectorMvText,  Role::ProjectorProdVisual, Role::ProjectorProdText,
    Role::FusionMv,          Role::FusionProd,       Role::EncoderMvQuery,      Role::EncoderMvKey,
    Role::EncoderProdQuery,  Role::EncoderProdKey,
};

const char* role_name(Role role);
Role role_from_name(const std::string& name);
bool is_key_role(Role role);
bool is_projector(Role role);

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ModelDims {
    std::size_t visual_in = 2048;
    std::size_t text_in = 768;
    std::size_t hidden = 1024;
    std::size_t refined = 512;  // d
    std::size_t fused = 512;    // d'
    double leaky_slope = 0.01;
    bool projector_batch_norm = true;
    double bn_eps = 1e-5;
    double bn_momentum = 0.1;
};

/// Dense parameter tensors for one sub-network. Weight matrices are stored
/// [out, in]. `buffers` hold non-trainable state (batch-norm running stats).
template <typename T>
struct ParamSet {
    Role role = Role::ProjectorMvVisual;
    std::map<std::string, Tensor<T>> tensors;
    std::map<std::string, Tensor<T>> buffers;
    bool trainable = true;

    std::size_t parameter_count() const;
    /// FNV-1a over roles, names and raw bytes of every tensor and buffer.
    std::uint64_t hash() const;
};

template <typename T>
struct ModelParams {
    std::map<Role, ParamSet<T>> sets;

    ParamSet<T>& at(Role r) { return sets.at(r); }
    const ParamSet<T>& at(Role r) const { return sets.at(r); }
    std::uint64_t hash() const;

    template <typename U>
    ModelParams<U> cast() const {
        ModelParams<U> out;
        for (const auto& [role, set] : sets) {
            ParamSet<U> s;
            s.role = set.role;
            s.trainable = set.trainable;
            for (const auto& [n, t] : set.tensors) s.tensors.emplace(n, t.template cast<U>());
            for (const auto& [n, t] : set.buffers) s.buffers.emplace(n, t.template cast<U>());
            out.sets.emplace(role, std::move(s));
        }
        return out;
    }
};

/// Query-side weights ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)); each key encoder
/// starts as an exact copy of its query twin. Deterministic per seed.
template <typename T>
ModelParams<T> init_params(const ModelDims& dims, std::uint64_t seed);

/// key <- m * key + (1 - m) * query, tensor by tensor. Query is untouched.
template <typename T>
void momentum_update(ParamSet<T>& key, const ParamSet<T>& query, double m);

}  // namespace mqmc::enc
