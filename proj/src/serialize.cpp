#include "rdm/serialize.hpp"

namespace rdm {

namespace {
constexpr std::uint32_t kWeightsVersion = 1;
constexpr std::uint32_t kSamplesVersion = 1;
}  // namespace

std::vector<std::uint8_t> encode_params(const ParamStore& params) {
    ByteWriter w;
    w.magic("RDMW");
    w.u32(kWeightsVersion);
    w.u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        w.str(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (int d : t.shape()) w.u32(static_cast<std::uint32_t>(d));
        for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(static_cast<float>(t[i]));
    }
    return w.buffer();
}

ParamStore decode_params(const std::vector<std::uint8_t>& data, const std::string& source) {
    ByteReader r(data, source);
    r.expect_magic("RDMW");
    const std::uint32_t version = r.u32();
    if (version != kWeightsVersion) r.fail("unsupported RDMW version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    ParamStore out;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str();
        const int rank = r.u8();
        std::vector<int> shape;
        std::size_t n = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim == 0) r.fail("zero dimension in parameter '" + name + "'");
            shape.push_back(static_cast<int>(dim));
            n *= dim;
        }
        Tensor t(shape);
        for (std::size_t j = 0; j < n; ++j) t[static_cast<Eigen::Index>(j)] = static_cast<double>(r.f32());
        if (out.contains(name)) r.fail("duplicate parameter '" + name + "'");
        out.insert(name, std::move(t));
    }
    r.expect_end();
    return out;
}

void save_params(const ParamStore& params, const std::filesystem::path& path) {
    atomic_write_file(path, encode_params(params));
}

ParamStore load_params(const std::filesystem::path& path) {
    return decode_params(read_file_bytes(path), path.string());
}

void save_samples(const std::vector<Tensor>& samples, const std::filesystem::path& path) {
    require(!samples.empty(), "save_samples: empty sample list");
    const auto& shape = samples.front().shape();
    for (const Tensor& s : samples)
        require(s.shape() == shape, "save_samples: samples must share one shape");

    ByteWriter w;
    w.magic("RDMS");
    w.u32(kSamplesVersion);
    w.u32(static_cast<std::uint32_t>(samples.size()));
    w.u8(static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) w.u32(static_cast<std::uint32_t>(d));
    for (const Tensor& s : samples)
        for (Eigen::Index i = 0; i < s.size(); ++i) w.f32(static_cast<float>(s[i]));
    atomic_write_file(path, w.buffer());
}

std::vector<Tensor> load_samples(const std::filesystem::path& path) {
    ByteReader r(read_file_bytes(path), path.string());
    r.expect_magic("RDMS");
    const std::uint32_t version = r.u32();
    if (version != kSamplesVersion) r.fail("unsupported RDMS version " + std::to_string(version));
    const std::uint32_t count = r.u32();
    const int rank = r.u8();
    std::vector<int> shape;
    std::size_t n = 1;
    for (int d = 0; d < rank; ++d) {
        const std::uint32_t dim = r.u32();
        if (dim == 0) r.fail("zero dimension in sample shape");
        shape.push_back(static_cast<int>(dim));
        n *= dim;
    }
    std::vector<Tensor> out;
    out.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Tensor t(shape);
        for (std::size_t j = 0; j < n; ++j) t[static_cast<Eigen::Index>(j)] = static_cast<double>(r.f32());
        out.push_back(std::move(t));
    }
    r.expect_end();
    return out;
}

}  // namespace rdm
