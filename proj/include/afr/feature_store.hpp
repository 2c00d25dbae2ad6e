#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace afr::episodes {

// Class-labelled feature vectors, as exported by a frozen feature extractor.
// Values are kept as 32-bit floats so that the on-disk format round-trips
// bit-exactly; consumers widen to double.
class FeatureStore {
public:
    FeatureStore() = default;
    explicit FeatureStore(std::size_t dim);

    std::size_t dim() const noexcept { return dim_; }
    std::size_t record_count() const noexcept { return names_.size(); }
    std::size_t class_count() const noexcept { return index_.size(); }

    void add(std::string class_name, std::span<const float> feature);
    void add(std::string class_name, std::span<const double> feature);

    const std::string& class_of(std::size_t record) const { return names_.at(record); }
    std::span<const float> feature(std::size_t record) const;

    bool has_class(const std::string& name) const { return index_.count(name) != 0; }
    // Record positions of a class, in insertion order. Throws LookupError.
    const std::vector<std::size_t>& records_of(const std::string& name) const;
    // Class names in ascending lexicographic order.
    std::vector<std::string> class_names() const;

    friend bool operator==(const FeatureStore& a, const FeatureStore& b);

private:
    std::size_t dim_ = 0;
    std::vector<std::string> names_;
    std::vector<float> data_;
    std::map<std::string, std::vector<std::size_t>> index_;
};

inline constexpr std::string_view kFeatureStoreMagic = "AFRF";
inline constexpr std::uint32_t kFeatureStoreVersion = 1;
// magic + version + dim + record count
inline constexpr std::uint64_t kFeatureStoreHeaderSize = 4 + 4 + 4 + 8;

std::string serialize_feature_store(const FeatureStore& store);
// Throws FormatError carrying the byte offset of the first bad field.
FeatureStore parse_feature_store(std::string_view bytes);
FeatureStore parse_feature_store_csv(std::string_view text);

void save_feature_store(const FeatureStore& store, const std::filesystem::path& path);
// Paths ending in ".csv" are read as CSV, everything else as AFRF binary.
// When expected_dim is set, a store of another dimension is rejected.
FeatureStore load_feature_store(const std::filesystem::path& path,
                                std::optional<std::size_t> expected_dim = std::nullopt);

}  // namespace afr::episodes
