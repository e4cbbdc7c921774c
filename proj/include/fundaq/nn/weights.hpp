#pragma once

// Weight container, little-endian:
//   "FQ8W" | u32 version=1 | u32 array count
//   per array: u16 name length | UTF-8 name | u8 dtype (0=f32, 1=f64) | u8 ndim | u32 dims... | raw values

#include <bit>
#include <cstdint>
#include <cstring>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fundaq/nn/resnet.hpp"

namespace fundaq::nn {

inline constexpr char kWeightMagic[4] = {'F', 'Q', '8', 'W'};
inline constexpr std::uint32_t kWeightVersion = 1;

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

struct WeightFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A decoded array, kept at 64-bit precision regardless of the stored dtype
/// (every f32 is exactly representable as f64).
struct StoredArray {
    DType dtype = DType::f32;
    Shape shape;
    std::vector<double> values;
};

using WeightMap = std::map<std::string, StoredArray>;

namespace detail {
static_assert(std::endian::native == std::endian::little, "weight container I/O assumes a little-endian host");

template <typename U>
void put(std::string& out, U v) {
    char buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.append(buf, sizeof(U));
}

class Reader {
public:
    explicit Reader(std::string_view b) : bytes_(b) {}
    template <typename U>
    U get(const char* what) {
        if (bytes_.size() - pos_ < sizeof(U)) throw WeightFormatError(std::string("truncated weight file while reading ") + what);
        U v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(U));
        pos_ += sizeof(U);
        return v;
    }
    std::string_view take(std::size_t n, const char* what) {
        if (bytes_.size() - pos_ < n) throw WeightFormatError(std::string("truncated weight file while reading ") + what);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    std::string_view bytes_;
    std::size_t pos_ = 0;
};
}  // namespace detail

template <typename T>
constexpr DType dtype_of() {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

/// Serializes every parameter and running-statistics array at the network's precision.
template <typename T>
std::string save_weights(ResNet<T>& net) {
    std::vector<std::pair<std::string, const Tensor<T>*>> arrays;
    net.for_each_array([&](const std::string& name, Tensor<T>& t) { arrays.emplace_back(name, &t); });

    std::string out(kWeightMagic, 4);
    detail::put<std::uint32_t>(out, kWeightVersion);
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(arrays.size()));
    for (const auto& [name, t] : arrays) {
        detail::put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
        out += name;
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(dtype_of<T>()));
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t->rank()));
        for (auto d : t->shape()) detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
        out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(T));
    }
    return out;
}

inline WeightMap parse_weights(std::string_view bytes) {
    detail::Reader in(bytes);
    const auto magic = in.take(4, "magic");
    if (magic != std::string_view(kWeightMagic, 4)) throw WeightFormatError("bad magic: not a weight container");
    const auto version = in.get<std::uint32_t>("version");
    if (version != kWeightVersion) throw WeightFormatError("unsupported weight container version " + std::to_string(version));
    const auto count = in.get<std::uint32_t>("array count");
    WeightMap out;
    for (std::uint32_t a = 0; a < count; ++a) {
        const auto len = in.get<std::uint16_t>("name length");
        std::string name(in.take(len, "name"));
        StoredArray arr;
        const auto dtype = in.get<std::uint8_t>("dtype");
        if (dtype > 1) throw WeightFormatError("array '" + name + "': unknown dtype " + std::to_string(dtype));
        arr.dtype = static_cast<DType>(dtype);
        const auto ndim = in.get<std::uint8_t>("ndim");
        std::size_t n = 1;
        for (std::uint8_t d = 0; d < ndim; ++d) {
            const auto extent = in.get<std::uint32_t>("dims");
            if (extent == 0) throw WeightFormatError("array '" + name + "': zero extent");
            arr.shape.push_back(extent);
            n *= extent;
        }
        const std::size_t width = arr.dtype == DType::f32 ? 4 : 8;
        if (n > bytes.size() / width) throw WeightFormatError("truncated weight file while reading values of '" + name + "'");
        const auto raw = in.take(n * width, "values");
        arr.values.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            if (arr.dtype == DType::f32) {
                float f;
                std::memcpy(&f, raw.data() + i * 4, 4);
                arr.values[i] = f;
            } else {
                std::memcpy(&arr.values[i], raw.data() + i * 8, 8);
            }
        }
        if (!out.emplace(name, std::move(arr)).second) throw WeightFormatError("duplicate array '" + name + "'");
    }
    if (!in.done()) throw WeightFormatError("trailing bytes after last array");
    return out;
}

struct LoadOptions {
    /// Arrays absent from the file keep their current values (backbone import).
    bool allow_missing = false;
};

/// Assigns stored arrays to the network. Unknown names and shape mismatches are errors.
template <typename T>
void assign_weights(ResNet<T>& net, const WeightMap& weights, LoadOptions opt = {}) {
    std::set<std::string> known;
    std::vector<std::string> missing;
    net.for_each_array([&](const std::string& name, Tensor<T>& t) {
        known.insert(name);
        auto it = weights.find(name);
        if (it == weights.end()) {
            missing.push_back(name);
            return;
        }
        if (it->second.shape != t.shape())
            throw WeightFormatError("shape mismatch for '" + name + "': file " + shape_str(it->second.shape) + ", network " + shape_str(t.shape()));
    });
    std::string unknown;
    for (const auto& [name, _] : weights)
        if (!known.count(name)) unknown += (unknown.empty() ? "" : ", ") + name;
    if (!unknown.empty()) throw WeightFormatError("unmatched array names in weight file: " + unknown);
    if (!missing.empty() && !opt.allow_missing) {
        std::string m;
        for (const auto& n : missing) m += (m.empty() ? "" : ", ") + n;
        throw WeightFormatError("weight file lacks arrays: " + m);
    }
    net.for_each_array([&](const std::string& name, Tensor<T>& t) {
        auto it = weights.find(name);
        if (it == weights.end()) return;
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(it->second.values[i]);
    });
}

/// Reconstructs the network configuration from array names and shapes.
inline NetworkConfig infer_config(const WeightMap& weights, std::size_t input_side) {
    NetworkConfig cfg;
    cfg.input_side = input_side;
    auto stem = weights.find("conv1.weight");
    if (stem == weights.end() || stem->second.shape.size() != 4) throw WeightFormatError("weight file lacks conv1.weight");
    cfg.stem_channels = stem->second.shape[0];
    cfg.blocks.clear();
    cfg.widths.clear();
    for (std::size_t s = 1;; ++s) {
        std::size_t blocks = 0, width = 0;
        for (;; ++blocks) {
            auto it = weights.find("layer" + std::to_string(s) + "." + std::to_string(blocks) + ".conv1.weight");
            if (it == weights.end()) break;
            width = it->second.shape.at(0);
        }
        if (blocks == 0) break;
        cfg.blocks.push_back(blocks);
        cfg.widths.push_back(width);
    }
    if (cfg.blocks.empty()) throw WeightFormatError("weight file has no residual stages");
    return cfg;
}

template <typename T>
ResNet<T> load_weights(std::string_view bytes, std::size_t input_side) {
    const auto weights = parse_weights(bytes);
    ResNet<T> net(infer_config(weights, input_side));
    assign_weights(net, weights);
    return net;
}

}  // namespace fundaq::nn
