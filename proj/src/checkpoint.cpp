#include "iclab/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "iclab/errors.hpp"

namespace iclab {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'L', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& is, const std::string& path) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) {
        throw LoadError("truncated checkpoint: " + path);
    }
    return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
    put<uint16_t>(os, static_cast<uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<uint8_t>(os, static_cast<uint8_t>(t.rank()));
    for (int64_t d : t.shape) put<int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
}

std::pair<std::string, Tensor> get_tensor(std::istream& is, const std::string& path) {
    const uint16_t name_len = get<uint16_t>(is, path);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) {
        throw LoadError("truncated checkpoint: " + path);
    }
    const uint8_t rank = get<uint8_t>(is, path);
    std::vector<int64_t> shape;
    for (int i = 0; i < rank; ++i) shape.push_back(get<int64_t>(is, path));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!is) {
        throw LoadError("truncated checkpoint: " + path);
    }
    return {std::move(name), std::move(t)};
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw LoadError("cannot open checkpoint for writing: " + path);
    }
    os.write(kMagic, sizeof(kMagic));
    put<uint32_t>(os, 1);  // version
    put<uint64_t>(os, ckpt.config_digest);
    put<int64_t>(os, ckpt.step);
    put<uint32_t>(os, static_cast<uint32_t>(ckpt.params.size()));
    for (const auto& [name, t] : ckpt.params) {
        put_tensor(os, name, t);
    }
    put<int64_t>(os, ckpt.adam.t);
    put<uint32_t>(os, static_cast<uint32_t>(ckpt.adam.m.size()));
    for (const auto& [name, t] : ckpt.adam.m) put_tensor(os, name, t);
    for (const auto& [name, t] : ckpt.adam.v) put_tensor(os, name, t);
    put<double>(os, ckpt.loss_accum);
    put<double>(os, ckpt.acc_accum);
    put<int64_t>(os, ckpt.accum_n);
    if (!os) {
        throw LoadError("failed writing checkpoint (disk full?): " + path);
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw LoadError("cannot open checkpoint: " + path);
    }
    char magic[8];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
        throw LoadError("bad checkpoint magic: " + path);
    }
    const uint32_t version = get<uint32_t>(is, path);
    if (version != 1) {
        throw LoadError("unsupported checkpoint version " + std::to_string(version) + ": " + path);
    }
    Checkpoint ckpt;
    ckpt.config_digest = get<uint64_t>(is, path);
    ckpt.step = get<int64_t>(is, path);
    const uint32_t n_params = get<uint32_t>(is, path);
    for (uint32_t i = 0; i < n_params; ++i) {
        auto [name, t] = get_tensor(is, path);
        ckpt.params.emplace(std::move(name), std::move(t));
    }
    ckpt.adam.t = get<int64_t>(is, path);
    const uint32_t n_moments = get<uint32_t>(is, path);
    for (uint32_t i = 0; i < n_moments; ++i) {
        auto [name, t] = get_tensor(is, path);
        ckpt.adam.m.emplace(std::move(name), std::move(t));
    }
    for (uint32_t i = 0; i < n_moments; ++i) {
        auto [name, t] = get_tensor(is, path);
        ckpt.adam.v.emplace(std::move(name), std::move(t));
    }
    ckpt.loss_accum = get<double>(is, path);
    ckpt.acc_accum = get<double>(is, path);
    ckpt.accum_n = get<int64_t>(is, path);
    return ckpt;
}

}  // namespace iclab
