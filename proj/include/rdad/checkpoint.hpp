#pragma once

#include <map>
#include <string>

#include "rdad/tensor.hpp"

namespace rdad {

// Checkpoint file: magic "RDAD1", newline, one-line JSON header
// {name -> [n,c,h,w]}, newline, then the tensors' little-endian f32 data
// concatenated in header order.
void save_checkpoint(const std::string& path, const std::map<std::string, TensorPtr>& params);

// Loads into an existing parameter map; names and shapes must match exactly.
void load_checkpoint(const std::string& path, std::map<std::string, TensorPtr>& params);

}  // namespace rdad
