#include "afr/feature_store.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "afr/errors.hpp"

namespace afr::episodes {

namespace {

template <typename T>
void put_le(std::string& out, T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
    }
}

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    std::uint64_t offset() const { return pos_; }
    bool at_end() const { return pos_ == bytes_.size(); }

    template <typename T>
    T read_le(const char* field) {
        require(sizeof(T), field);
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        }
        pos_ += sizeof(T);
        return static_cast<T>(v);
    }

    std::string_view read_bytes(std::size_t n, const char* field) {
        require(n, field);
        auto out = bytes_.substr(pos_, n);
        pos_ += n;
        return out;
    }

private:
    void require(std::size_t n, const char* field) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(std::string("truncated file while reading ") + field, pos_);
        }
    }

    std::string_view bytes_;
    std::uint64_t pos_ = 0;
};

bool valid_utf8(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        std::size_t extra = 0;
        if (c < 0x80) extra = 0;
        else if ((c & 0xE0) == 0xC0 && c >= 0xC2) extra = 1;
        else if ((c & 0xF0) == 0xE0) extra = 2;
        else if ((c & 0xF8) == 0xF0 && c <= 0xF4) extra = 3;
        else return false;
        if (i + extra >= s.size()) return false;
        for (std::size_t k = 1; k <= extra; ++k) {
            if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return false;
        }
        i += extra + 1;
    }
    return true;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

FeatureStore::FeatureStore(std::size_t dim) : dim_(dim) {}

void FeatureStore::add(std::string class_name, std::span<const float> feature) {
    if (feature.size() != dim_) {
        throw ShapeError("feature for class '" + class_name + "' has " +
                         std::to_string(feature.size()) + " values, store dim is " +
                         std::to_string(dim_));
    }
    if (class_name.empty()) throw DataError("empty class name");
    for (float v : feature) {
        if (!std::isfinite(v)) throw DataError("non-finite feature for class '" + class_name + "'");
    }
    index_[class_name].push_back(names_.size());
    names_.push_back(std::move(class_name));
    data_.insert(data_.end(), feature.begin(), feature.end());
}

void FeatureStore::add(std::string class_name, std::span<const double> feature) {
    std::vector<float> narrowed(feature.begin(), feature.end());
    add(std::move(class_name), std::span<const float>(narrowed));
}

std::span<const float> FeatureStore::feature(std::size_t record) const {
    if (record >= names_.size()) throw LookupError("record index out of range");
    return {data_.data() + record * dim_, dim_};
}

const std::vector<std::size_t>& FeatureStore::records_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("class '" + name + "' not in feature store");
    return it->second;
}

std::vector<std::string> FeatureStore::class_names() const {
    std::vector<std::string> out;
    out.reserve(index_.size());
    for (const auto& [name, _] : index_) out.push_back(name);
    return out;
}

bool operator==(const FeatureStore& a, const FeatureStore& b) {
    if (a.dim_ != b.dim_ || a.names_ != b.names_ || a.data_.size() != b.data_.size()) return false;
    for (std::size_t i = 0; i < a.data_.size(); ++i) {
        if (std::bit_cast<std::uint32_t>(a.data_[i]) != std::bit_cast<std::uint32_t>(b.data_[i])) {
            return false;
        }
    }
    return true;
}

std::string serialize_feature_store(const FeatureStore& store) {
    std::string out;
    out.append(kFeatureStoreMagic);
    put_le<std::uint32_t>(out, kFeatureStoreVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
    put_le<std::uint64_t>(out, store.record_count());
    for (std::size_t r = 0; r < store.record_count(); ++r) {
        const std::string& name = store.class_of(r);
        if (name.size() > UINT16_MAX) throw DataError("class name longer than 65535 bytes");
        put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out.append(name);
        for (float v : store.feature(r)) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

FeatureStore parse_feature_store(std::string_view bytes) {
    Reader in(bytes);
    if (in.read_bytes(4, "magic") != kFeatureStoreMagic) throw FormatError("bad magic", 0);
    const std::uint64_t version_at = in.offset();
    if (const auto version = in.read_le<std::uint32_t>("version"); version != kFeatureStoreVersion) {
        throw FormatError("unsupported version " + std::to_string(version), version_at);
    }
    const std::uint64_t dim_at = in.offset();
    const auto dim = in.read_le<std::uint32_t>("dim");
    if (dim == 0) throw FormatError("dim must be positive", dim_at);
    const std::uint64_t count_at = in.offset();
    const auto count = in.read_le<std::uint64_t>("record count");
    FeatureStore store(dim);
    // Sized on the first record so a corrupt dim cannot force a huge allocation.
    std::vector<float> feature;
    for (std::uint64_t r = 0; r < count; ++r) {
        const std::uint64_t record_at = in.offset();
        const auto name_len = in.read_le<std::uint16_t>("record name length");
        if (name_len == 0) throw FormatError("record " + std::to_string(r) + " has an empty class name", record_at);
        const std::uint64_t name_at = in.offset();
        auto name = in.read_bytes(name_len, "record class name");
        if (!valid_utf8(name)) throw FormatError("class name is not valid UTF-8", name_at);
        const std::uint64_t values_at = in.offset();
        auto raw = in.read_bytes(4 * static_cast<std::size_t>(dim), "record features");
        feature.resize(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            std::uint32_t bits = 0;
            for (std::size_t b = 0; b < 4; ++b) {
                bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(raw[4 * j + b])) << (8 * b);
            }
            feature[j] = std::bit_cast<float>(bits);
            if (!std::isfinite(feature[j])) {
                throw FormatError("non-finite feature value", values_at + 4 * j);
            }
        }
        store.add(std::string(name), std::span<const float>(feature));
    }
    if (!in.at_end()) {
        throw FormatError("trailing bytes after " + std::to_string(count) + " records (declared count at offset " +
                              std::to_string(count_at) + ")",
                          in.offset());
    }
    return store;
}

FeatureStore parse_feature_store_csv(std::string_view text) {
    std::optional<FeatureStore> store;
    std::size_t line_no = 0;
    std::uint64_t line_start = 0;
    while (line_start < text.size()) {
        std::size_t line_end = text.find('\n', line_start);
        if (line_end == std::string_view::npos) line_end = text.size();
        std::string_view line = text.substr(line_start, line_end - line_start);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        const std::uint64_t at = line_start;
        line_start = line_end + 1;
        if (line.empty()) continue;

        const std::size_t comma = line.find(',');
        if (comma == 0 || comma == std::string_view::npos) {
            throw FormatError("CSV line " + std::to_string(line_no) + ": expected class_name,v1,...", at);
        }
        std::string name(line.substr(0, comma));
        std::vector<float> values;
        std::size_t pos = comma + 1;
        while (true) {
            std::size_t next = line.find(',', pos);
            std::string_view field = line.substr(pos, next == std::string_view::npos ? line.size() - pos : next - pos);
            while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
            while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
            float v = 0.0F;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (ec != std::errc() || ptr != field.data() + field.size() || !std::isfinite(v)) {
                throw FormatError("CSV line " + std::to_string(line_no) + ": bad number '" + std::string(field) + "'",
                                  at + pos);
            }
            values.push_back(v);
            if (next == std::string_view::npos) break;
            pos = next + 1;
        }
        if (!store) store.emplace(values.size());
        if (values.size() != store->dim()) {
            throw FormatError("CSV line " + std::to_string(line_no) + ": dim mismatch, expected " +
                                  std::to_string(store->dim()) + " values, got " + std::to_string(values.size()),
                              at);
        }
        store->add(std::move(name), std::span<const float>(values));
    }
    if (!store) throw FormatError("CSV file has no records", 0);
    return std::move(*store);
}

void save_feature_store(const FeatureStore& store, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + path.string());
    const std::string bytes = serialize_feature_store(store);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + path.string());
}

FeatureStore load_feature_store(const std::filesystem::path& path, std::optional<std::size_t> expected_dim) {
    const std::string bytes = read_file(path);
    FeatureStore store = path.extension() == ".csv" ? parse_feature_store_csv(bytes) : parse_feature_store(bytes);
    if (expected_dim && store.dim() != *expected_dim) {
        throw FormatError(path.string() + ": dim " + std::to_string(store.dim()) + " does not match expected " +
                              std::to_string(*expected_dim),
                          8);
    }
    return store;
}

}  // namespace afr::episodes
