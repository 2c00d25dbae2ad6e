#include "afr/semantics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "afr/errors.hpp"

namespace afr::semantics {

using nlohmann::json;

const std::vector<double>& SemanticTable::at(const std::string& class_name) const {
    auto it = entries.find(class_name);
    if (it == entries.end()) throw LookupError("no embedding for class '" + class_name + "'");
    return it->second;
}

void SemanticTable::insert(const std::string& class_name, std::vector<double> embedding) {
    if (embedding.size() != dim) {
        throw DataError("embedding for '" + class_name + "' has length " + std::to_string(embedding.size()) +
                        ", expected " + std::to_string(dim));
    }
    double norm2 = 0.0;
    for (double v : embedding) {
        if (!std::isfinite(v)) throw DataError("embedding for '" + class_name + "' is not finite");
        norm2 += v * v;
    }
    if (norm2 == 0.0) throw DataError("embedding for '" + class_name + "' has zero norm");
    if (!entries.emplace(class_name, std::move(embedding)).second) {
        throw DataError("duplicate embedding for '" + class_name + "'");
    }
}

std::vector<std::string> SelectionResult::class_names() const {
    std::vector<std::string> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.name);
    return out;
}

double cosine_relation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("cosine_relation: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
    }
    double ab = 0.0;
    double aa = 0.0;
    double bb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if (aa == 0.0 || bb == 0.0) throw NumericError("cosine_relation: zero-norm vector");
    const double r = ab / (std::sqrt(aa) * std::sqrt(bb));
    return std::clamp(r, -1.0, 1.0);
}

SelectionResult select_related(const std::string& novel_class, const SemanticTable& table,
                               const std::vector<std::string>& base_classes, std::size_t beta) {
    const auto& novel = table.at(novel_class);
    std::set<std::string> candidates(base_classes.begin(), base_classes.end());
    candidates.erase(novel_class);
    if (beta < 1 || beta > candidates.size()) {
        throw ConfigError("beta " + std::to_string(beta) + " outside [1, " + std::to_string(candidates.size()) + "]");
    }

    std::vector<RelatedClass> scored;
    scored.reserve(candidates.size());
    for (const auto& name : candidates) scored.push_back({name, cosine_relation(novel, table.at(name))});

    // Rank on scores snapped to a 1e-12 grid so that relations which are
    // equal in exact arithmetic (e.g. a rescaled duplicate embedding) tie and
    // fall back to name order instead of rounding noise.
    auto key = [](double score) { return std::llround(score * 1e12); };
    auto better = [&](const RelatedClass& x, const RelatedClass& y) {
        const auto kx = key(x.score);
        const auto ky = key(y.score);
        if (kx != ky) return kx > ky;
        return x.name < y.name;
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(beta), scored.end(), better);
    scored.resize(beta);
    return {novel_class, std::move(scored), beta};
}

SemanticTable parse_semantic_table(std::string_view json_text) {
    // nlohmann keeps the last value for a repeated key, so duplicates are
    // caught while parsing. Depth 1 holds the top-level keys, depth 2 the
    // class names inside "embeddings".
    std::vector<std::set<std::string>> seen_keys(4);
    json::parser_callback_t guard = [&](int depth, json::parse_event_t event, json& parsed) {
        if (event == json::parse_event_t::object_start && depth < 4) {
            seen_keys[static_cast<std::size_t>(depth)].clear();
        } else if (event == json::parse_event_t::key && depth >= 1 && depth < 4) {
            const auto key = parsed.get<std::string>();
            if (!seen_keys[static_cast<std::size_t>(depth - 1)].insert(key).second) {
                throw DataError("duplicate key '" + key + "' in embedding file");
            }
        }
        return true;
    };

    json doc;
    try {
        doc = json::parse(json_text.begin(), json_text.end(), guard);
    } catch (const json::exception& e) {
        throw DataError(std::string("embedding file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("dim") || !doc.contains("embeddings")) {
        throw DataError("embedding file must be an object with \"dim\" and \"embeddings\"");
    }
    if (!doc["dim"].is_number_unsigned() || doc["dim"].get<std::size_t>() == 0) {
        throw DataError("\"dim\" must be a positive integer");
    }
    if (!doc["embeddings"].is_object()) throw DataError("\"embeddings\" must be an object");

    SemanticTable table;
    table.dim = doc["dim"].get<std::size_t>();
    for (const auto& [name, values] : doc["embeddings"].items()) {
        if (!values.is_array()) throw DataError("embedding for '" + name + "' must be an array");
        std::vector<double> v;
        v.reserve(values.size());
        for (const auto& x : values) {
            if (!x.is_number()) throw DataError("embedding for '" + name + "' has a non-numeric entry");
            v.push_back(x.get<double>());
        }
        table.insert(name, std::move(v));
    }
    return table;
}

SemanticTable load_semantic_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_semantic_table(ss.str());
}

std::string serialize_semantic_table(const SemanticTable& table) {
    json doc;
    doc["dim"] = table.dim;
    doc["embeddings"] = json::object();
    for (const auto& [name, v] : table.entries) doc["embeddings"][name] = v;
    return doc.dump();
}

void save_semantic_table(const SemanticTable& table, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    out << serialize_semantic_table(table) << '\n';
    if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace afr::semantics
