#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "clicksim/numkernel.hpp"

namespace clicksim::ckpt {

// Text checkpoint: a shape manifest followed by named tensors, full
// precision, exact round trip.
//
//   clicksim-ckpt 1
//   model <tag>
//   meta <key> <value>
//   tensor <name> <rows> <cols>
//   <row of values>...
//   end

struct LoadedModel {
  std::string tag;
  std::map<std::string, std::string> meta;
  std::map<std::string, num::Mat> tensors;

  int meta_int(const std::string& key) const;
};

void write_model(std::ostream& out, const std::string& tag, const num::ParamStore& store,
                 const std::map<std::string, std::string>& meta);
void write_model(const std::filesystem::path& file, const std::string& tag,
                 const num::ParamStore& store, const std::map<std::string, std::string>& meta);

LoadedModel read_model(std::istream& in);
LoadedModel read_model(const std::filesystem::path& file);

// Peek at the `model` tag of a checkpoint file ("generator",
// "discriminator", ...); returns "" if the file is not a checkpoint.
std::string peek_model_tag(const std::filesystem::path& file);

// Copy loaded tensors into an existing registered store (shapes must match).
void assign_into(const LoadedModel& m, num::ParamStore& store);

}  // namespace clicksim::ckpt
