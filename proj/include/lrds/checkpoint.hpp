#pragma once

// Binary array container shared by model checkpoints and training state:
// magic + version, a JSON descriptor (metadata plus an array index), then the
// raw little-endian doubles. Readers address arrays by name.

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrds/tensor.hpp"

namespace lrds {

struct Checkpoint {
    nlohmann::json meta;
    std::map<std::string, Tensor> arrays;

    const Tensor& require(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const nlohmann::json& meta,
                     const std::vector<std::pair<std::string, const Tensor*>>& arrays);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lrds
