#include "clicksim/checkpoint.hpp"

#include <fstream>
#include <sstream>

namespace clicksim::ckpt {

int LoadedModel::meta_int(const std::string& key) const {
  auto it = meta.find(key);
  check_data(it != meta.end(), "checkpoint: missing meta key '" + key + "'");
  try {
    return std::stoi(it->second);
  } catch (const std::exception&) {
    throw DataError("checkpoint: meta '" + key + "' is not an integer");
  }
}

void write_model(std::ostream& out, const std::string& tag, const num::ParamStore& store,
                 const std::map<std::string, std::string>& meta) {
  out.precision(17);
  out << "clicksim-ckpt 1\n";
  out << "model " << tag << '\n';
  for (const auto& [k, v] : meta) out << "meta " << k << ' ' << v << '\n';
  for (std::size_t i = 0; i < store.count(); ++i) {
    const num::Param& p = store.param(i);
    out << "tensor " << store.name(i) << ' ' << p.value.rows() << ' ' << p.value.cols() << '\n';
    for (Eigen::Index r = 0; r < p.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.value.cols(); ++c) {
        if (c) out << ' ';
        out << p.value(r, c);
      }
      out << '\n';
    }
  }
  out << "end\n";
}

void write_model(const std::filesystem::path& file, const std::string& tag,
                 const num::ParamStore& store, const std::map<std::string, std::string>& meta) {
  std::ofstream out(file);
  check_data(out.good(), "cannot write " + file.string());
  write_model(out, tag, store, meta);
}

LoadedModel read_model(std::istream& in) {
  LoadedModel m;
  std::string header;
  std::getline(in, header);
  check_data(header == "clicksim-ckpt 1", "checkpoint: bad header '" + header + "'");

  std::string line;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "model") {
      ls >> m.tag;
    } else if (tag == "meta") {
      std::string k, v;
      ls >> k >> v;
      m.meta[k] = v;
    } else if (tag == "tensor") {
      std::string name;
      Eigen::Index rows, cols;
      ls >> name >> rows >> cols;
      check_data(!ls.fail() && rows > 0 && cols > 0, "checkpoint: bad tensor header");
      num::Mat t(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          check_data(static_cast<bool>(in >> t(r, c)),
                     "checkpoint: truncated tensor " + name);
        }
      in.ignore();  // trailing newline
      m.tensors[name] = std::move(t);
    } else if (tag == "end") {
      ended = true;
      break;
    } else {
      throw DataError("checkpoint: unknown tag '" + tag + "'");
    }
  }
  check_data(ended, "checkpoint: missing 'end'");
  check_data(!m.tag.empty(), "checkpoint: missing 'model' tag");
  return m;
}

LoadedModel read_model(const std::filesystem::path& file) {
  std::ifstream in(file);
  check_data(in.good(), "cannot open " + file.string());
  return read_model(in);
}

std::string peek_model_tag(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in.good()) return "";
  std::string header, line;
  if (!std::getline(in, header) || header != "clicksim-ckpt 1") return "";
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag, value;
    ls >> tag >> value;
    if (tag == "model") return value;
  }
  return "";
}

void assign_into(const LoadedModel& m, num::ParamStore& store) {
  for (std::size_t i = 0; i < store.count(); ++i) {
    auto it = m.tensors.find(store.name(i));
    check_data(it != m.tensors.end(), "checkpoint: missing tensor " + store.name(i));
    num::Param& p = store.param(i);
    check_data(it->second.rows() == p.value.rows() && it->second.cols() == p.value.cols(),
               "checkpoint: shape mismatch for " + store.name(i));
    p.value = it->second;
    p.grad.setZero();
  }
}

}  // namespace clicksim::ckpt
