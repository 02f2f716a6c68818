#include "lrds/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "lrds/error.hpp"

namespace lrds {

using nlohmann::json;

namespace {
constexpr char kMagic[8] = {'L', 'R', 'D', 'S', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

const Tensor& Checkpoint::require(const std::string& name) const {
    auto it = arrays.find(name);
    check(it != arrays.end(), "checkpoint is missing array '", name, "'");
    return it->second;
}

void save_checkpoint(const std::string& path, const json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& arrays) {
    json header = meta;
    json index = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : arrays) {
        index.push_back(json{{"name", name}, {"shape", t->shape}, {"offset", offset}});
        offset += t->data.size();
    }
    header["arrays"] = std::move(index);
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open checkpoint '", path, "' for writing");
    out.write(kMagic, sizeof kMagic);
    const std::uint32_t version = kVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof header_len);
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, t] : arrays)
        out.write(reinterpret_cast<const char*>(t->data.data()),
                  static_cast<std::streamsize>(t->data.size() * sizeof(double)));
    check(out.good(), "checkpoint write to '", path, "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open checkpoint '", path, "'");
    char magic[8];
    in.read(magic, sizeof magic);
    check(in.good() && std::memcmp(magic, kMagic, sizeof kMagic) == 0, path,
          ": not a checkpoint file");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    check(version == kVersion, path, ": unsupported checkpoint version ", version);
    std::uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof header_len);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    check(in.good(), path, ": truncated checkpoint header");

    Checkpoint ckpt;
    try {
        ckpt.meta = json::parse(header_text);
    } catch (const json::exception& e) {
        raise(path, ": bad checkpoint header: ", e.what());
    }
    for (const auto& ja : ckpt.meta.at("arrays")) {
        const std::string name = ja.at("name").get<std::string>();
        Tensor t(ja.at("shape").get<std::vector<int>>());
        in.read(reinterpret_cast<char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * sizeof(double)));
        check(in.good(), path, ": truncated data for '", name, "'");
        ckpt.arrays.emplace(name, std::move(t));
    }
    return ckpt;
}

}  // namespace lrds
