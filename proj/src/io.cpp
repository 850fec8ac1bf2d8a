#include "shsmm/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "shsmm/errors.hpp"

namespace shsmm {

namespace {

using nlohmann::json;

json rows_of(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

MatrixXd matrix_of(const json& j, int rows, int cols, const char* name) {
  if (!j.is_array() || static_cast<int>(j.size()) != rows)
    throw Error(Errc::ParseError, std::string(name) + " must have " + std::to_string(rows) + " rows");
  MatrixXd m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    const auto& r = j[i];
    if (!r.is_array() || static_cast<int>(r.size()) != cols)
      throw Error(Errc::ParseError, std::string(name) + " row " + std::to_string(i) + " has wrong length");
    for (int k = 0; k < cols; ++k) m(i, k) = r[k].get<double>();
  }
  return m;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string model_to_json(const HsmmParams& p) {
  json j;
  j["n_o"] = p.n_o;
  j["n_x"] = p.n_x;
  j["n_d"] = p.n_d;
  j["O"] = rows_of(p.O);
  j["X"] = rows_of(p.X);
  j["D"] = rows_of(p.D);
  j["pi_x"] = std::vector<double>(p.pi_x.data(), p.pi_x.data() + p.pi_x.size());
  if (p.prior == DurationPrior::Explicit) j["pi_d"] = rows_of(p.pi_d);
  return j.dump(2) + "\n";
}

HsmmParams model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
    HsmmParams p;
    p.n_o = j.at("n_o").get<int>();
    p.n_x = j.at("n_x").get<int>();
    p.n_d = j.at("n_d").get<int>();
    if (p.n_o < 1 || p.n_x < 1 || p.n_d < 1) throw Error(Errc::ParseError, "sizes must be positive");
    p.O = matrix_of(j.at("O"), p.n_o, p.n_x, "O");
    p.X = matrix_of(j.at("X"), p.n_x, p.n_x, "X");
    p.D = matrix_of(j.at("D"), p.n_d, p.n_x, "D");
    const auto pi = j.at("pi_x").get<std::vector<double>>();
    if (static_cast<int>(pi.size()) != p.n_x) throw Error(Errc::ParseError, "pi_x must have n_x entries");
    p.pi_x = Eigen::Map<const VectorXd>(pi.data(), p.n_x);
    if (j.contains("pi_d")) {
      p.prior = DurationPrior::Explicit;
      p.pi_d = matrix_of(j["pi_d"], p.n_d, p.n_x, "pi_d");
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(Errc::ParseError, e.what());
  }
}

void save_model(const HsmmParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  out << model_to_json(p);
}

HsmmParams load_model(const std::string& path) { return model_from_json(slurp(path)); }

std::vector<SequenceLine> read_sequence_lines(std::istream& in) {
  std::vector<SequenceLine> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    SequenceLine sl;
    sl.line = n;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
      char* end = nullptr;
      const long v = std::strtol(tok.c_str(), &end, 10);
      if (*end != '\0' || v < 0 || v > 1'000'000) {
        sl.error = "bad symbol '" + tok + "'";
        sl.symbols.clear();
        break;
      }
      sl.symbols.push_back(static_cast<Symbol>(v));
    }
    out.push_back(std::move(sl));
  }
  return out;
}

std::vector<Sequence> load_sequences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  std::vector<Sequence> out;
  for (auto& sl : read_sequence_lines(in)) {
    if (!sl.error.empty()) throw Error(Errc::ParseError, path + ":" + std::to_string(sl.line) + ": " + sl.error);
    out.push_back(std::move(sl.symbols));
  }
  return out;
}

void save_sequences(const std::vector<Sequence>& seqs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  for (const auto& s : seqs) {
    for (std::size_t i = 0; i < s.size(); ++i) out << (i ? " " : "") << s[i];
    out << "\n";
  }
}

const NamedTensor& TensorContainer::get(const std::string& role) const {
  for (const auto& [r, t] : tensors)
    if (r == role) return t;
  throw Error(Errc::ParseError, "container has no tensor '" + role + "'");
}

namespace {

constexpr const char* kMagic = "SHSMM-TENSORS";
constexpr int kVersion = 1;

void put_le(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  char buf[8];
  std::memcpy(buf, &bits, 8);
  out.write(buf, 8);
}

double get_le(std::istream& in) {
  char buf[8];
  if (!in.read(buf, 8)) throw Error(Errc::ParseError, "truncated tensor payload");
  std::uint64_t bits;
  std::memcpy(&bits, buf, 8);
  if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void write_container(const TensorContainer& c, std::ostream& out) {
  out << kMagic << " " << kVersion << "\n";
  out << "kind " << c.kind << "\n";
  out << "n_o " << c.n_o << " n_x " << c.n_x << " n_d " << c.n_d << "\n";
  out << "offsets";
  for (int r : c.offsets) out << " " << r;
  out << "\n";
  for (const auto& [k, v] : c.meta) out << "meta " << k << " " << v << "\n";
  for (const auto& [role, t] : c.tensors) {
    out << "tensor " << role << " " << t.order();
    for (const auto& m : t.modes()) out << " " << m.label.name << ":" << m.label.occurrence << ":" << m.dim;
    out << "\n";
  }
  out << "end\n";
  for (const auto& [role, t] : c.tensors)
    for (double v : t.data()) put_le(out, v);
}

TensorContainer read_container(std::istream& in) {
  TensorContainer c;
  std::string line, word;
  if (!std::getline(in, line)) throw Error(Errc::ParseError, "empty container");
  {
    std::istringstream ss(line);
    int version = 0;
    ss >> word >> version;
    if (word != kMagic) throw Error(Errc::ParseError, "not a tensor container");
    if (version != kVersion) throw Error(Errc::ParseError, "unsupported container version");
  }
  std::vector<std::pair<std::string, std::vector<Mode>>> shapes;
  bool ended = false;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    ss >> word;
    if (word == "end") {
      ended = true;
      break;
    } else if (word == "kind") {
      ss >> c.kind;
    } else if (word == "n_o") {
      std::string a, b;
      ss >> c.n_o >> a >> c.n_x >> b >> c.n_d;
    } else if (word == "offsets") {
      int r;
      while (ss >> r) c.offsets.push_back(r);
    } else if (word == "meta") {
      std::string k, v;
      ss >> k;
      std::getline(ss >> std::ws, v);
      c.meta[k] = v;
    } else if (word == "tensor") {
      std::string role;
      std::size_t order = 0;
      ss >> role >> order;
      std::vector<Mode> modes;
      for (std::size_t i = 0; i < order; ++i) {
        std::string spec;
        ss >> spec;
        const auto a = spec.find(':'), b = spec.rfind(':');
        if (a == std::string::npos || a == b) throw Error(Errc::ParseError, "bad mode spec " + spec);
        modes.push_back({{spec.substr(0, a), std::stoi(spec.substr(a + 1, b - a - 1))},
                         static_cast<std::size_t>(std::stoull(spec.substr(b + 1)))});
      }
      shapes.emplace_back(role, std::move(modes));
    } else {
      throw Error(Errc::ParseError, "unexpected header line: " + line);
    }
  }
  if (!ended) throw Error(Errc::ParseError, "missing header terminator");
  for (auto& [role, modes] : shapes) {
    std::size_t n = 1;
    for (const auto& m : modes) n *= m.dim;
    std::vector<double> data(n);
    for (auto& v : data) v = get_le(in);
    c.tensors.emplace_back(role, NamedTensor(std::move(modes), std::move(data)));
  }
  return c;
}

void save_container(const TensorContainer& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot write " + path);
  write_container(c, out);
}

TensorContainer load_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path);
  return read_container(in);
}

bool is_container_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string head(std::strlen(kMagic), '\0');
  return in.read(head.data(), static_cast<std::streamsize>(head.size())) && head == kMagic;
}

TensorContainer moments_to_container(const MomentSet& m) {
  TensorContainer c;
  c.kind = "moments";
  c.n_o = m.n_o;
  c.n_x = m.sched.n_x;
  c.n_d = m.sched.n_d;
  c.offsets = m.sched.right_offsets;
  c.meta["window_count"] = std::to_string(m.window_count);
  c.tensors = {{"m_lr", m.m_lr},
               {"m_lr_shift", m.m_lr_shift},
               {"m_lro", m.m_lro},
               {"m_oo", m.m_oo},
               {"m_start", m.m_start}};
  return c;
}

MomentSet moments_from_container(const TensorContainer& c) {
  if (c.kind != "moments") throw Error(Errc::ParseError, "container kind is " + c.kind + ", expected moments");
  MomentSet m;
  m.n_o = c.n_o;
  m.sched = build_schedule(c.n_x, c.n_d);
  if (m.sched.right_offsets != c.offsets) throw Error(Errc::ParseError, "offsets do not match the schedule");
  m.m_lr = c.get("m_lr");
  m.m_lr_shift = c.get("m_lr_shift");
  m.m_lro = c.get("m_lro");
  m.m_oo = c.get("m_oo");
  m.m_start = c.get("m_start");
  auto it = c.meta.find("window_count");
  m.window_count = it == c.meta.end() ? 0 : std::stoull(it->second);
  return m;
}

}  // namespace shsmm
