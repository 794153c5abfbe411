// SPDX-License-Identifier: Apache-2.0
#include "cepo/autodiff/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cepo::ad {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

template <class T>
void put(std::ofstream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::ifstream& is, const std::filesystem::path& path) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw std::runtime_error("checkpoint " + path.string() + ": truncated");
    }
    return v;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path, const TensorList& tensors) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
    put<std::uint64_t>(os, tensors.size());
    for (const auto& [name, t] : tensors) {
        put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(os, static_cast<std::uint32_t>(t.dim()));
        for (std::size_t s : t.shape()) put<std::uint64_t>(os, s);
        auto v = t.values();
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    }
    if (!os) throw std::runtime_error("failed writing checkpoint " + path.string());
}

TensorList load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
    std::string magic(kCheckpointMagic.size(), '\0');
    if (!is.read(magic.data(), static_cast<std::streamsize>(magic.size())) || magic != kCheckpointMagic) {
        throw std::runtime_error("checkpoint " + path.string() + ": bad magic (expected CEPOCKPT1)");
    }
    const auto count = get<std::uint64_t>(is, path);
    TensorList out;
    out.reserve(count);
    for (std::uint64_t e = 0; e < count; ++e) {
        const auto name_len = get<std::uint32_t>(is, path);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw std::runtime_error("checkpoint " + path.string() + ": truncated");
        const auto rank = get<std::uint32_t>(is, path);
        Shape shape(rank);
        for (auto& s : shape) s = get<std::uint64_t>(is, path);
        std::vector<double> values(shape_numel(shape));
        if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)))) {
            throw std::runtime_error("checkpoint " + path.string() + ": truncated");
        }
        out.push_back({std::move(name), Tensor::from(std::move(shape), std::move(values))});
    }
    return out;
}

const Tensor& find_tensor(const TensorList& tensors, std::string_view name) {
    for (const auto& nt : tensors) {
        if (nt.name == name) return nt.tensor;
    }
    throw std::out_of_range("no tensor named '" + std::string(name) + "'");
}

} // namespace cepo::ad
