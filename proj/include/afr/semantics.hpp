#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace afr::semantics {

// One label embedding per class name. Read-only once loaded.
struct SemanticTable {
    std::size_t dim = 0;
    std::map<std::string, std::vector<double>> entries;

    // Throws LookupError naming the class.
    const std::vector<double>& at(const std::string& class_name) const;
    bool contains(const std::string& class_name) const { return entries.count(class_name) != 0; }
    // Inserts after checking length, finiteness and nonzero norm.
    void insert(const std::string& class_name, std::vector<double> embedding);
};

struct RelatedClass {
    std::string name;
    double score = 0.0;

    friend bool operator==(const RelatedClass&, const RelatedClass&) = default;
};

struct SelectionResult {
    std::string novel_class;
    std::vector<RelatedClass> ranked;
    std::size_t beta = 0;

    std::vector<std::string> class_names() const;
};

inline constexpr std::size_t kDefaultBeta = 3;

// Cosine similarity, clamped to [-1, 1].
double cosine_relation(std::span<const double> a, std::span<const double> b);

// The beta base classes most similar to novel_class, best first. Scores
// within about 1e-12 count as tied; ties are broken by ascending class name.
// novel_class is never part of the result.
SelectionResult select_related(const std::string& novel_class, const SemanticTable& table,
                               const std::vector<std::string>& base_classes, std::size_t beta);

// {"dim": D, "embeddings": {"<class>": [D reals], ...}}
SemanticTable parse_semantic_table(std::string_view json_text);
SemanticTable load_semantic_table(const std::filesystem::path& path);
std::string serialize_semantic_table(const SemanticTable& table);
void save_semantic_table(const SemanticTable& table, const std::filesystem::path& path);

}  // namespace afr::semantics
