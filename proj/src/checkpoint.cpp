#include "rdad/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace rdad {

static constexpr char kMagic[] = "RDAD1";

void save_checkpoint(const std::string& path, const std::map<std::string, TensorPtr>& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
  nlohmann::ordered_json header;
  for (const auto& [name, t] : params) header[name] = {t->n, t->c, t->h, t->w};
  f << kMagic << "\n" << header.dump() << "\n";
  for (const auto& [name, t] : params)
    f.write(reinterpret_cast<const char*>(t->data.data()),
            static_cast<std::streamsize>(t->data.size() * sizeof(float)));
}

void load_checkpoint(const std::string& path, std::map<std::string, TensorPtr>& params) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string magic, header_line;
  std::getline(f, magic);
  if (magic != kMagic) throw std::runtime_error("load_checkpoint: bad magic in " + path);
  std::getline(f, header_line);
  auto header = nlohmann::ordered_json::parse(header_line);
  if (header.size() != params.size())
    throw std::runtime_error("load_checkpoint: parameter count mismatch");
  for (auto& [name, shape] : header.items()) {
    auto it = params.find(name);
    if (it == params.end())
      throw std::runtime_error("load_checkpoint: unexpected parameter \"" + name + "\"");
    Tensor& t = *it->second;
    if (shape.at(0) != t.n || shape.at(1) != t.c || shape.at(2) != t.h || shape.at(3) != t.w)
      throw std::runtime_error("load_checkpoint: shape mismatch for \"" + name + "\"");
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
  }
}

}  // namespace rdad
