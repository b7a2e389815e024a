#pragma once

#include <iosfwd>
#include <string>

#include "minnsa/network.hpp"

namespace minnsa {

// Model checkpoint: magic + format version, a JSON header carrying the full
// ModelConfig and a named section table, then the parameter tensors as
// little-endian 64-bit floats in row-major order. Loading validates every
// section shape against the config.

void save_model(const Model& model, std::ostream& sink);
void save_model(const Model& model, const std::string& path);

Model load_model(std::istream& source);
Model load_model(const std::string& path);

}  // namespace minnsa
