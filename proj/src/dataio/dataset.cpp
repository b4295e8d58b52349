#include "mqmc/dataio/dataset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "mqmc/numerics/random.hpp"
#include "mqmc/util/binary.hpp"

namespace mqmc::data {

namespace fs = std::filesystem;
using nlohmann::json;

Ontology Ontology::regular(int coarse_count, int children_per_node) {
    if (coarse_count < 1 || children_per_node < 1) throw DataError("ontology: counts must be positive");
    Ontology o;
    for (int c = 0; c < coarse_count; ++c) {
        o.coarse.push_back({c, "coarse-" + std::to_string(c), -1});
        for (int k = 0; k < children_per_node; ++k) {
            const int id = c * children_per_node + k;
            o.middle.push_back({id, "coarse-" + std::to_string(c) + "/middle-" + std::to_string(id), c});
        }
    }
    return o;
}

int Ontology::parent_of(int middle_id) const {
    for (const OntologyNode& n : middle) {
        if (n.id == middle_id) return n.parent;
    }
    throw DataError("ontology: unknown middle category " + std::to_string(middle_id));
}

bool Ontology::valid(const CategoryPath& path) const {
    for (const OntologyNode& n : middle) {
        if (n.id == path.middle) return n.parent == path.coarse;
    }
    return false;
}

std::vector<int> Ontology::middle_ids() const {
    std::vector<int> ids;
    for (const OntologyNode& n : middle) ids.push_back(n.id);
    return ids;
}

const InstancePair& Dataset::by_id(std::uint64_t id) const {
    if (id < pairs.size() && pairs[id].id == id) return pairs[id];
    auto it = std::find_if(pairs.begin(), pairs.end(), [&](const InstancePair& p) { return p.id == id; });
    if (it == pairs.end()) throw DataError("dataset: unknown pair id " + std::to_string(id));
    return *it;
}

void GenConfig::validate() const {
    if (pairs < 1) throw DataError("generator: need at least one pair");
    if (coarse < 1 || children < 1) throw DataError("generator: ontology counts must be positive");
    if (latent_dim < 1 || visual_dim < 1 || text_dim < 1) throw DataError("generator: dimensions must be positive");
    for (double v : {coarse_spread, middle_spread, product_noise, clutter, modality_noise, domain_shift, zipf}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw DataError("generator: noise levels must be finite and >= 0");
    }
}

namespace {

json gen_config_json(const GenConfig& c) {
    return json{{"pairs", c.pairs},
                {"coarse", c.coarse},
                {"children", c.children},
                {"latent_dim", c.latent_dim},
                {"visual_dim", c.visual_dim},
                {"text_dim", c.text_dim},
                {"coarse_spread", c.coarse_spread},
                {"middle_spread", c.middle_spread},
                {"product_noise", c.product_noise},
                {"clutter", c.clutter},
                {"modality_noise", c.modality_noise},
                {"domain_shift", c.domain_shift},
                {"zipf", c.zipf},
                {"seed", c.seed}};
}

using Matrix = std::vector<std::vector<double>>;

Matrix gaussian_map(num::Rng& rng, std::size_t rows, std::size_t cols) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
    Matrix m(rows, std::vector<double>(cols));
    for (auto& row : m) {
        for (double& v : row) v = scale * rng.normal();
    }
    return m;
}

std::vector<float> apply(const Matrix& map, const std::vector<double>& latent, double noise, num::Rng& rng) {
    std::vector<float> out(map.size());
    for (std::size_t r = 0; r < map.size(); ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < latent.size(); ++c) acc += map[r][c] * latent[c];
        out[r] = static_cast<float>(acc + noise * rng.normal());
    }
    return out;
}

struct Generated {
    Dataset dataset;
    std::vector<std::vector<double>> product_latents;
};

Generated generate_impl(const GenConfig& config, bool with_features) {
    config.validate();
    Generated g;
    Dataset& ds = g.dataset;
    ds.ontology = Ontology::regular(config.coarse, config.children);
    ds.visual_dim = config.visual_dim;
    ds.text_dim = config.text_dim;
    ds.generator_echo = gen_config_json(config).dump();

    const std::size_t latent = config.latent_dim;
    num::Rng proto_rng(num::mix_seed(config.seed, 1));
    std::vector<std::vector<double>> coarse_proto(ds.ontology.coarse.size(), std::vector<double>(latent));
    for (auto& p : coarse_proto) {
        for (double& v : p) v = config.coarse_spread * proto_rng.normal();
    }
    std::vector<std::vector<double>> middle_proto(ds.ontology.middle.size(), std::vector<double>(latent));
    for (std::size_t m = 0; m < middle_proto.size(); ++m) {
        const auto& parent = coarse_proto[static_cast<std::size_t>(ds.ontology.middle[m].parent)];
        for (std::size_t i = 0; i < latent; ++i) middle_proto[m][i] = parent[i] + config.middle_spread * proto_rng.normal();
    }

    // Microvideo maps are the product maps plus an independent perturbation
    // (different capture conditions for the same content).
    Matrix visual_map, text_map, mv_visual_map, mv_text_map;
    if (with_features) {
        num::Rng map_rng(num::mix_seed(config.seed, 2));
        visual_map = gaussian_map(map_rng, config.visual_dim, latent);
        text_map = gaussian_map(map_rng, config.text_dim, latent);
        mv_visual_map = gaussian_map(map_rng, config.visual_dim, latent);
        mv_text_map = gaussian_map(map_rng, config.text_dim, latent);
        auto blend = [&](Matrix& shifted, const Matrix& base) {
            for (std::size_t r = 0; r < shifted.size(); ++r) {
                for (std::size_t c = 0; c < latent; ++c) shifted[r][c] = base[r][c] + config.domain_shift * shifted[r][c];
            }
        };
        blend(mv_visual_map, visual_map);
        blend(mv_text_map, text_map);
    }

    // Zipf frequencies over a seeded ranking of the middle categories.
    num::Rng freq_rng(num::mix_seed(config.seed, 3));
    std::vector<std::size_t> rank(middle_proto.size());
    for (std::size_t i = 0; i < rank.size(); ++i) rank[i] = i;
    freq_rng.shuffle(rank);
    std::vector<double> cumulative(middle_proto.size());
    double total = 0.0;
    for (std::size_t r = 0; r < rank.size(); ++r) {
        total += 1.0 / std::pow(static_cast<double>(r + 1), config.zipf);
        cumulative[r] = total;
    }

    const std::uint64_t pair_seed = num::mix_seed(config.seed, 4);
    const std::size_t categories = middle_proto.size();
    ds.pairs.reserve(config.pairs);
    g.product_latents.reserve(config.pairs);
    for (std::size_t i = 0; i < config.pairs; ++i) {
        num::Rng pair_rng(num::mix_seed(pair_seed, i));
        const double u = pair_rng.uniform() * total;
        const std::size_t r = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        const std::size_t m = rank[std::min(r, categories - 1)];

        std::vector<double> z(latent);
        for (std::size_t k = 0; k < latent; ++k) z[k] = middle_proto[m][k] + config.product_noise * pair_rng.normal();

        std::vector<double> mv = z;
        if (categories > 1) {
            std::size_t other = static_cast<std::size_t>(pair_rng.index(categories - 1));
            if (other >= m) ++other;
            for (std::size_t k = 0; k < latent; ++k) mv[k] += config.clutter * middle_proto[other][k];
        }

        InstancePair p;
        p.id = i;
        p.path = {ds.ontology.middle[m].parent, ds.ontology.middle[m].id};
        if (with_features) {
            p.prod_visual = apply(visual_map, z, config.modality_noise, pair_rng);
            p.prod_text = apply(text_map, z, config.modality_noise, pair_rng);
            p.mv_visual = apply(mv_visual_map, mv, config.modality_noise, pair_rng);
            p.mv_text = apply(mv_text_map, mv, config.modality_noise, pair_rng);
        }
        ds.pairs.push_back(std::move(p));
        g.product_latents.push_back(std::move(z));
    }
    return g;
}

std::string read_or_throw(const fs::path& path) {
    if (!fs::exists(path)) throw DataError("missing dataset file " + path.string());
    return util::read_file(path.string());
}

}  // namespace

Dataset generate(const GenConfig& config) { return generate_impl(config, true).dataset; }

std::vector<std::vector<double>> generate_product_latents(const GenConfig& config) {
    return generate_impl(config, false).product_latents;
}

std::string encode_features(const std::vector<const std::vector<float>*>& rows, std::size_t dim) {
    util::ByteWriter w;
    w.raw("MQFV");
    w.u32(kFeatureVersion);
    w.u32(static_cast<std::uint32_t>(rows.size()));
    w.u32(static_cast<std::uint32_t>(dim));
    for (const std::vector<float>* row : rows) {
        if (row->size() != dim) throw DimensionError("feature row has dimension " + std::to_string(row->size()));
        for (float v : *row) w.f32(v);
    }
    const std::uint32_t crc = util::crc32(w.bytes());
    w.u32(crc);
    return w.take();
}

std::vector<std::vector<float>> decode_features(const std::string& bytes, const std::string& label) {
    if (bytes.size() < kFeatureHeaderBytes + 4) throw DimensionError(label + ": file too short for a header");
    util::ByteReader r(bytes);
    if (r.raw(4) != "MQFV") throw DataError(label + ": bad magic");
    const std::uint32_t version = r.u32();
    if (version != kFeatureVersion) {
        throw VersionError(label + ": unsupported feature file version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    const std::uint32_t dim = r.u32();
    const std::size_t expected = kFeatureHeaderBytes + std::size_t{count} * dim * 4 + 4;
    if (bytes.size() != expected) {
        throw DimensionError(label + ": header declares " + std::to_string(count) + "x" + std::to_string(dim) +
                             " values but file holds " + std::to_string(bytes.size()) + " bytes");
    }
    const std::string_view body(bytes.data(), bytes.size() - 4);
    util::ByteReader tail(std::string_view(bytes).substr(bytes.size() - 4));
    if (util::crc32(body) != tail.u32()) throw ChecksumError(label + ": CRC32 mismatch");
    std::vector<std::vector<float>> rows(count, std::vector<float>(dim));
    for (auto& row : rows) {
        for (float& v : row) v = r.f32();
    }
    return rows;
}

void save(const Dataset& dataset, const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw DataError("cannot create output directory " + dir);
    const fs::path root(dir);

    std::ostringstream manifest;
    manifest << "# mqmc-manifest v1 count=" << dataset.pairs.size() << " visual_dim=" << dataset.visual_dim
             << " text_dim=" << dataset.text_dim << "\n";
    manifest << "pair_id\tlevel1\tlevel2\tvisual_offset\ttext_offset\n";
    std::vector<const std::vector<float>*> mvv, mvt, pv, pt;
    for (std::size_t row = 0; row < dataset.pairs.size(); ++row) {
        const InstancePair& p = dataset.pairs[row];
        manifest << p.id << '\t' << p.path.coarse << '\t' << p.path.middle << '\t'
                 << kFeatureHeaderBytes + row * dataset.visual_dim * 4 << '\t'
                 << kFeatureHeaderBytes + row * dataset.text_dim * 4 << '\n';
        mvv.push_back(&p.mv_visual);
        mvt.push_back(&p.mv_text);
        pv.push_back(&p.prod_visual);
        pt.push_back(&p.prod_text);
    }
    try {
        util::write_file((root / kManifestFile).string(), manifest.str());
        util::write_file((root / kMvVisualFile).string(), encode_features(mvv, dataset.visual_dim));
        util::write_file((root / kMvTextFile).string(), encode_features(mvt, dataset.text_dim));
        util::write_file((root / kProdVisualFile).string(), encode_features(pv, dataset.visual_dim));
        util::write_file((root / kProdTextFile).string(), encode_features(pt, dataset.text_dim));
    } catch (const DataError&) {
        throw;
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }

    json desc;
    desc["format"] = "mqmc-dataset";
    desc["version"] = 1;
    desc["pairs"] = dataset.pairs.size();
    desc["visual_dim"] = dataset.visual_dim;
    desc["text_dim"] = dataset.text_dim;
    for (const OntologyNode& n : dataset.ontology.coarse) desc["ontology"]["coarse"].push_back({{"id", n.id}, {"label", n.label}});
    for (const OntologyNode& n : dataset.ontology.middle) {
        desc["ontology"]["middle"].push_back({{"id", n.id}, {"label", n.label}, {"parent", n.parent}});
    }
    desc["generator"] = dataset.generator_echo.empty() ? json(nullptr) : json::parse(dataset.generator_echo);
    try {
        util::write_file((root / kDescriptorFile).string(), desc.dump(2) + "\n");
    } catch (const std::exception& e) {
        throw DataError(e.what());
    }
}

Dataset generate(const GenConfig& config, const std::string& out_dir) {
    Dataset ds = generate(config);
    save(ds, out_dir);
    return ds;
}

namespace {

std::size_t header_value(const std::string& header, const std::string& key) {
    const auto pos = header.find(key + "=");
    if (pos == std::string::npos) throw DataError("manifest header lacks " + key);
    return std::stoull(header.substr(pos + key.size() + 1));
}

}  // namespace

Dataset load(const std::string& dir) {
    const fs::path root(dir);
    if (!fs::is_directory(root)) throw DataError("dataset directory not found: " + dir);

    std::istringstream manifest(read_or_throw(root / kManifestFile));
    std::string header;
    std::getline(manifest, header);
    const std::string prefix = "# mqmc-manifest ";
    if (header.rfind(prefix, 0) != 0) throw VersionError("manifest: missing version tag");
    const std::string version = header.substr(prefix.size(), header.find(' ', prefix.size()) - prefix.size());
    if (version != "v1") throw VersionError("manifest: unsupported version '" + version + "'");
    const std::size_t count = header_value(header, "count");
    const std::size_t visual_dim = header_value(header, "visual_dim");
    const std::size_t text_dim = header_value(header, "text_dim");

    std::string columns;
    std::getline(manifest, columns);

    Dataset ds;
    ds.visual_dim = visual_dim;
    ds.text_dim = text_dim;
    std::string line;
    std::size_t row = 0;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        InstancePair p;
        std::size_t voff = 0, toff = 0;
        if (!(fields >> p.id >> p.path.coarse >> p.path.middle >> voff >> toff)) {
            throw DataError("manifest: malformed row " + std::to_string(row));
        }
        if (voff != kFeatureHeaderBytes + row * visual_dim * 4 || toff != kFeatureHeaderBytes + row * text_dim * 4) {
            throw DimensionError("manifest: byte offsets of row " + std::to_string(row) +
                                 " disagree with the declared dimensions");
        }
        ds.pairs.push_back(std::move(p));
        ++row;
    }
    if (ds.pairs.size() != count) throw DataError("manifest: declares " + std::to_string(count) + " rows, has " +
                                                  std::to_string(ds.pairs.size()));

    auto read_features = [&](const char* file, std::size_t dim) {
        auto rows = decode_features(read_or_throw(root / file), file);
        if (rows.size() != count || (!rows.empty() && rows.front().size() != dim)) {
            throw DimensionError(std::string(file) + ": shape disagrees with manifest (" + std::to_string(count) +
                                 "x" + std::to_string(dim) + ")");
        }
        return rows;
    };
    auto mvv = read_features(kMvVisualFile, visual_dim);
    auto mvt = read_features(kMvTextFile, text_dim);
    auto pv = read_features(kProdVisualFile, visual_dim);
    auto pt = read_features(kProdTextFile, text_dim);
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        ds.pairs[i].mv_visual = std::move(mvv[i]);
        ds.pairs[i].mv_text = std::move(mvt[i]);
        ds.pairs[i].prod_visual = std::move(pv[i]);
        ds.pairs[i].prod_text = std::move(pt[i]);
    }

    const fs::path desc_path = root / kDescriptorFile;
    if (fs::exists(desc_path)) {
        json desc;
        try {
            desc = json::parse(util::read_file(desc_path.string()));
        } catch (const json::exception& e) {
            throw DataError(std::string("dataset.json: ") + e.what());
        }
        for (const auto& n : desc.at("ontology").at("coarse")) {
            ds.ontology.coarse.push_back({n.at("id").get<int>(), n.at("label").get<std::string>(), -1});
        }
        for (const auto& n : desc.at("ontology").at("middle")) {
            ds.ontology.middle.push_back(
                {n.at("id").get<int>(), n.at("label").get<std::string>(), n.at("parent").get<int>()});
        }
        if (!desc["generator"].is_null()) ds.generator_echo = desc["generator"].dump();
    } else {
        // Reconstruct the ontology from the manifest alone.
        std::map<int, int> parents;
        for (const InstancePair& p : ds.pairs) parents[p.path.middle] = p.path.coarse;
        std::set<int> coarse;
        for (const auto& [m, c] : parents) {
            coarse.insert(c);
            ds.ontology.middle.push_back({m, "middle-" + std::to_string(m), c});
        }
        for (int c : coarse) ds.ontology.coarse.push_back({c, "coarse-" + std::to_string(c), -1});
    }
    for (const InstancePair& p : ds.pairs) {
        if (!ds.ontology.valid(p.path)) {
            throw DataError("pair " + std::to_string(p.id) + " has a category path outside the ontology");
        }
    }
    return ds;
}

}  // namespace mqmc::data
