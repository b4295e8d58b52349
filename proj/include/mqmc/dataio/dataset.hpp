#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mqmc/types.hpp"

namespace mqmc::data {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ChecksumError : public DataError {
public:
    using DataError::DataError;
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

class VersionError : public DataError {
public:
    using DataError::DataError;
};

struct OntologyNode {
    int id = 0;
    std::string label;
    int parent = -1;  // coarse id for middle nodes
};

/// Coarse categories and their middle-level children; ids are dense per level.
struct Ontology {
    std::vector<OntologyNode> coarse;
    std::vector<OntologyNode> middle;

    static Ontology regular(int coarse_count, int children_per_node);
    int parent_of(int middle_id) const;
    bool valid(const CategoryPath& path) const;
    std::vector<int> middle_ids() const;
};

struct InstancePair {
    std::uint64_t id = 0;
    std::vector<float> mv_visual, mv_text, prod_visual, prod_text;
    CategoryPath path;
};

struct GenConfig {
    std::size_t pairs = 2000;
    int coarse = 6;
    int children = 5;
    std::size_t latent_dim = 64;
    std::size_t visual_dim = 2048;
    std::size_t text_dim = 768;
    double coarse_spread = 1.0;   // spread of coarse prototypes
    double middle_spread = 0.6;   // offset of a middle prototype from its parent
    double product_noise = 0.8;   // per-instance jitter of the product latent around its prototype
    double clutter = 0.5;         // weight of an unrelated prototype mixed into microvideo latents
    double modality_noise = 0.5;  // additive feature noise on every vector
    double domain_shift = 0.5;    // perturbation of the microvideo feature maps relative to product maps
    double zipf = 1.0;            // category-frequency exponent over middle categories
    std::uint64_t seed = 1;

    void validate() const;
};

struct Dataset {
    Ontology ontology;
    std::vector<InstancePair> pairs;
    std::size_t visual_dim = 0;
    std::size_t text_dim = 0;
    std::string generator_echo;  // JSON of the GenConfig that produced it, if any

    const InstancePair& by_id(std::uint64_t id) const;
};

/// Synthetic hierarchical microvideo-product pairs. Deterministic per seed.
Dataset generate(const GenConfig& config);

/// Product latent codes the generator used, in pair order (for separability checks).
std::vector<std::vector<double>> generate_product_latents(const GenConfig& config);

/// Writes manifest.tsv, four feature files and dataset.json into `dir`.
void save(const Dataset& dataset, const std::string& dir);

/// generate() followed by save().
Dataset generate(const GenConfig& config, const std::string& out_dir);

/// Reads a dataset directory, verifying versions, dimensions and checksums.
Dataset load(const std::string& dir);

inline constexpr const char* kManifestFile = "manifest.tsv";
inline constexpr const char* kDescriptorFile = "dataset.json";
inline constexpr const char* kMvVisualFile = "mv_visual.bin";
inline constexpr const char* kMvTextFile = "mv_text.bin";
inline constexpr const char* kProdVisualFile = "prod_visual.bin";
inline constexpr const char* kProdTextFile = "prod_text.bin";

// Feature file: 16-byte header {magic "MQFV", version, count, dim} (u32 LE),
// count*dim f32 LE values, then CRC32 of everything before it.
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

std::string encode_features(const std::vector<const std::vector<float>*>& rows, std::size_t dim);
std::vector<std::vector<float>> decode_features(const std::string& bytes, const std::string& label);

}  // namespace mqmc::data
