#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

namespace mqmc {

/// Two-level position in the category ontology: coarse (level 1) and middle (level 2).
struct CategoryPath {
    int coarse = 0;
    int middle = 0;

    auto operator<=>(const CategoryPath&) const = default;
};

enum class Side { Microvideo, Product };
enum class EmbeddingRole { Query, Key };

inline const char* side_name(Side s) { return s == Side::Microvideo ? "microvideo" : "product"; }

struct InstanceEmbedding {
    std::vector<double> values;
    EmbeddingRole role = EmbeddingRole::Key;
    Side side = Side::Microvideo;
    std::uint64_t id = 0;
    CategoryPath path;
};

}  // namespace mqmc
