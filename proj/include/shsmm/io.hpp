#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "shsmm/model.hpp"
#include "shsmm/moments.hpp"
#include "shsmm/tensor.hpp"

namespace shsmm {

// Model JSON: {n_o, n_x, n_d, O, X, D, pi_x[, pi_d]} with matrices stored
// as arrays of rows.
std::string model_to_json(const HsmmParams& p);
HsmmParams model_from_json(const std::string& text);
void save_model(const HsmmParams& p, const std::string& path);
HsmmParams load_model(const std::string& path);

// Sequence files: one sequence per line, space-separated symbols, lines
// starting with '#' and blank lines skipped.
struct SequenceLine {
  int line = 0;  // 1-based line number in the file
  Sequence symbols;
  std::string error;  // non-empty when the line failed to parse
};
std::vector<SequenceLine> read_sequence_lines(std::istream& in);
// Throws ParseError on the first bad line.
std::vector<Sequence> load_sequences(const std::string& path);
void save_sequences(const std::vector<Sequence>& seqs, const std::string& path);

// Binary tensor container: a text header followed by little-endian float64
// payloads in header order.
//
//   SHSMM-TENSORS 1
//   kind <kind>
//   n_o <n> n_x <n> n_d <n>
//   offsets <r0> <r1> ...
//   meta <key> <value>            (zero or more)
//   tensor <role> <order> <name>:<occurrence>:<dim> ...
//   end
struct TensorContainer {
  std::string kind;
  int n_o = 0, n_x = 0, n_d = 0;
  std::vector<int> offsets;
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, NamedTensor>> tensors;

  const NamedTensor& get(const std::string& role) const;
};

void write_container(const TensorContainer& c, std::ostream& out);
TensorContainer read_container(std::istream& in);
void save_container(const TensorContainer& c, const std::string& path);
TensorContainer load_container(const std::string& path);
bool is_container_file(const std::string& path);

TensorContainer moments_to_container(const MomentSet& m);
MomentSet moments_from_container(const TensorContainer& c);

}  // namespace shsmm
