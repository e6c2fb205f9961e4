#pragma once

// Checkpoint text container, version 1:
//
//   handunc-checkpoint 1
//   config {"d_in":...,"head":"structured",...}
//   tensor <name> <rows> <cols> v00 v01 ... (row-major, one tensor per line)
//   end
//
// Values use shortest round-trip decimal formatting, so save -> load is exact.

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "handunc/config.hpp"
#include "handunc/errors.hpp"
#include "handunc/model.hpp"
#include "handunc/predictions_io.hpp"
#include "handunc/train.hpp"

namespace handunc::net {

inline constexpr const char* kCheckpointMagic = "handunc-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

inline void write_checkpoint(std::ostream& os, const ModelConfig& cfg, const ModelParams& params) {
  os << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  nlohmann::ordered_json j = cfg;
  os << "config " << j.dump() << '\n';
  for_each_tensor(params, [&](const std::string& name, const auto& t) {
    os << "tensor " << name << ' ' << t.rows() << ' ' << t.cols();
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) os << ' ' << metrics::format_double(t(r, c));
    os << '\n';
  });
  os << "end\n";
  if (!os) throw Error(ErrorCode::IoError, "failed writing checkpoint");
}

inline void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ModelParams& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_checkpoint(os, cfg, params);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  Checkpoint ck;
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(is, line)) return false;
    ++line_no;
    return true;
  };
  if (!next()) throw ParseError(1, "empty checkpoint");
  {
    std::istringstream ls(line);
    std::string magic;
    int version = 0;
    ls >> magic >> version;
    if (magic != kCheckpointMagic) throw ParseError(line_no, "not a checkpoint");
    if (version != kCheckpointVersion)
      throw Error(ErrorCode::IncompatibleCheckpoint, "unsupported checkpoint version " + std::to_string(version));
  }
  if (!next() || line.rfind("config ", 0) != 0) throw ParseError(line_no, "missing config line");
  try {
    ck.config = nlohmann::json::parse(line.substr(7)).get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(line_no, e.what());
  } catch (const Error& e) {
    throw ParseError(line_no, e.what());
  }
  try {
    validate(ck.config);
  } catch (const Error& e) {
    throw Error(ErrorCode::IncompatibleCheckpoint, e.what());
  }

  // Tensors must arrive in the order and shapes the config implies.
  ck.params = init_params(ck.config, 0);
  std::vector<std::string> names;
  for_each_tensor(ck.params, [&](const std::string& n, const auto&) { names.push_back(n); });
  std::size_t k = 0;
  bool ended = false;
  while (!ended) {
    if (!next()) throw ParseError(line_no, "unexpected end of checkpoint");
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream ls(line);
    std::string tag, name;
    Eigen::Index rows = 0, cols = 0;
    ls >> tag >> name >> rows >> cols;
    if (tag != "tensor" || !ls) throw ParseError(line_no, "malformed tensor line");
    if (k >= names.size() || names[k] != name)
      throw Error(ErrorCode::IncompatibleCheckpoint, "unexpected tensor '" + name + "'");
    bool found = false;
    for_each_tensor(ck.params, [&](const std::string& n, auto& t) {
      if (n != name) return;
      found = true;
      if (t.rows() != rows || t.cols() != cols)
        throw Error(ErrorCode::IncompatibleCheckpoint, "tensor '" + name + "' has wrong shape");
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          std::string tok;
          if (!(ls >> tok)) throw ParseError(line_no, "tensor '" + name + "' is truncated");
          double v = 0.0;
          const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
          if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
            throw ParseError(line_no, "bad number '" + tok + "'");
          t(r, c) = v;
        }
    });
    if (!found) throw Error(ErrorCode::IncompatibleCheckpoint, "unknown tensor '" + name + "'");
    ++k;
  }
  if (k != names.size()) throw Error(ErrorCode::IncompatibleCheckpoint, "checkpoint is missing tensors");
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::IoError, "cannot open " + path);
  return read_checkpoint(is);
}

/// Loss trace CSV: iteration,total,deter,nll,mse
inline void write_loss_trace(std::ostream& os, const std::vector<LossRecord>& trace) {
  os << "iteration,total,deter,nll,mse\n";
  for (const auto& r : trace)
    os << r.iteration << ',' << metrics::format_double(r.parts.total) << ',' << metrics::format_double(r.parts.deter)
       << ',' << metrics::format_double(r.parts.nll) << ',' << metrics::format_double(r.parts.mse) << '\n';
  if (!os) throw Error(ErrorCode::IoError, "failed writing loss trace");
}

inline void save_loss_trace(const std::string& path, const std::vector<LossRecord>& trace) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorCode::IoError, "cannot open " + path + " for writing");
  write_loss_trace(os, trace);
}

}  // namespace handunc::net
