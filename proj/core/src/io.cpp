#include "osdr/io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "osdr/errors.hpp"

namespace osdr {

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) throw IoError("read failed on " + path);
  return std::move(buf).str();
}

// Little cursor over a binary buffer with truncation checks.
struct Cursor {
  const std::string& buf;
  const std::string& path;
  std::size_t at = 0;

  void bytes(void* dst, std::size_t n, const char* what) {
    if (at + n > buf.size())
      throw FormatError(path + ": truncated reading " + what);
    std::memcpy(dst, buf.data() + at, n);
    at += n;
  }
  template <typename T>
  T scalar(const char* what) {
    T v;
    bytes(&v, sizeof(T), what);
    return v;
  }
  void expect_end() {
    if (at != buf.size())
      throw FormatError(path + ": trailing bytes after checkpoint payload");
  }
};

template <typename T>
void put(std::string& out, const T& v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_matrix(std::string& out, const Matrix& m) {
  out.append(reinterpret_cast<const char*>(m.flat().data()),
             m.size() * sizeof(double));
}

Matrix take_matrix(Cursor& c, std::size_t rows, std::size_t cols,
                   const char* what) {
  Matrix m(rows, cols);
  c.bytes(m.flat().data(), m.size() * sizeof(double), what);
  return m;
}

std::string serialize_gcn_body(const GcnModel& m) {
  std::string out;
  put<std::uint64_t>(out, m.config.input_dim);
  put<std::uint64_t>(out, m.config.hidden_dim);
  put<std::uint64_t>(out, m.config.output_dim);
  put<std::uint64_t>(out, m.config.kernel == AttentionKernel::Cosine ? 0 : 1);
  put<std::uint64_t>(out, m.config.uniform_attention ? 1 : 0);
  put<double>(out, m.config.leaky_slope);
  put_matrix(out, m.head1a.weight.value);
  put_matrix(out, m.head1b.weight.value);
  put_matrix(out, m.head2.weight.value);
  return out;
}

GcnModel deserialize_gcn_body(Cursor& c) {
  GcnConfig cfg;
  cfg.input_dim = c.scalar<std::uint64_t>("input dim");
  cfg.hidden_dim = c.scalar<std::uint64_t>("hidden dim");
  cfg.output_dim = c.scalar<std::uint64_t>("output dim");
  const auto kernel = c.scalar<std::uint64_t>("kernel tag");
  if (kernel > 1) throw FormatError(c.path + ": bad kernel tag");
  cfg.kernel = kernel == 0 ? AttentionKernel::Cosine
                           : AttentionKernel::NegEuclidean;
  cfg.uniform_attention = c.scalar<std::uint64_t>("uniform flag") != 0;
  cfg.leaky_slope = c.scalar<double>("leaky slope");
  GcnModel m = GcnModel::init(cfg, 0);
  m.head1a.weight.value =
      take_matrix(c, cfg.hidden_dim, cfg.input_dim, "head1a weights");
  m.head1b.weight.value =
      take_matrix(c, cfg.hidden_dim, cfg.input_dim, "head1b weights");
  m.head2.weight.value =
      take_matrix(c, cfg.output_dim, 2 * cfg.hidden_dim, "head2 weights");
  return m;
}

void check_magic(Cursor& c, const char* magic) {
  char got[8];
  c.bytes(got, 8, "magic");
  if (std::memcmp(got, magic, 8) != 0)
    throw FormatError(c.path + ": not a " + std::string(magic) + " file");
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(sep, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double(const std::string& s, const std::string& where) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw FormatError(where + ": bad number '" + s + "'");
  return v;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t parse_hex64(const std::string& s, const char* what) {
  if (s.size() != 16 ||
      s.find_first_not_of("0123456789abcdef") != std::string::npos)
    throw FormatError(std::string(what) + ": bad hex value '" + s + "'");
  return std::stoull(s, nullptr, 16);
}

}  // namespace

std::string fmt_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot create " + tmp);
    out.write(content.data(),
              static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out.good()) throw IoError("write failed on " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw IoError("cannot move " + tmp + " into place");
  }
}

void write_dataset_fbin(const std::string& path, const DomainDataset& ds) {
  std::string out;
  put<std::int32_t>(out, static_cast<std::int32_t>(ds.size()));
  put<std::int32_t>(out, static_cast<std::int32_t>(ds.features.cols()));
  put<std::int32_t>(out, ds.labeled() ? 1 : 0);
  for (double v : ds.features.flat()) put<float>(out, static_cast<float>(v));
  if (ds.labeled())
    for (std::int32_t y : ds.labels) put<std::int32_t>(out, y);
  write_file_atomic(path, out);
}

DomainDataset read_dataset_fbin(const std::string& path) {
  const std::string buf = read_file(path);
  Cursor c{buf, path};
  const auto n = c.scalar<std::int32_t>("sample count");
  const auto d = c.scalar<std::int32_t>("feature dim");
  const auto flag = c.scalar<std::int32_t>("label flag");
  if (n <= 0 || d <= 0 || (flag != 0 && flag != 1))
    throw FormatError(path + ": bad header");
  DomainDataset ds;
  ds.features = Matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(d));
  for (double& v : ds.features.flat()) v = c.scalar<float>("feature");
  if (flag == 1) {
    ds.labels.resize(static_cast<std::size_t>(n));
    std::int32_t max_label = 0;
    for (std::int32_t& y : ds.labels) {
      y = c.scalar<std::int32_t>("label");
      max_label = std::max(max_label, y);
    }
    ds.class_count = static_cast<std::size_t>(max_label) + 1;
  }
  c.expect_end();
  return ds;
}

void write_dataset_csv(const std::string& path, const DomainDataset& ds) {
  std::string out;
  for (std::size_t k = 0; k < ds.features.cols(); ++k) {
    if (k) out += ',';
    out += "f" + std::to_string(k);
  }
  if (ds.labeled()) out += ",label";
  out += '\n';
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto row = ds.features.row(i);
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (k) out += ',';
      out += fmt_g17(row[k]);
    }
    if (ds.labeled()) out += ',' + std::to_string(ds.labels[i]);
    out += '\n';
  }
  write_file_atomic(path, out);
}

DomainDataset read_dataset_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path + ": empty file");
  const auto header = split(line, ',');
  const bool labeled = !header.empty() && header.back() == "label";
  const std::size_t d = header.size() - (labeled ? 1 : 0);
  if (d == 0) throw FormatError(path + ": no feature columns");

  std::vector<double> values;
  std::vector<std::int32_t> labels;
  std::size_t rows = 0;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    if (cells.size() != header.size())
      throw FormatError(path + ":" + std::to_string(lineno) +
                        ": expected " + std::to_string(header.size()) +
                        " cells");
    const std::string where = path + ":" + std::to_string(lineno);
    for (std::size_t k = 0; k < d; ++k)
      values.push_back(parse_double(cells[k], where));
    if (labeled)
      labels.push_back(
          static_cast<std::int32_t>(parse_double(cells[d], where)));
    ++rows;
  }
  if (rows == 0) throw FormatError(path + ": no data rows");

  DomainDataset ds;
  ds.features = Matrix(rows, d);
  std::copy(values.begin(), values.end(), ds.features.flat().begin());
  ds.labels = std::move(labels);
  if (ds.labeled()) {
    std::int32_t max_label = *std::max_element(ds.labels.begin(),
                                               ds.labels.end());
    ds.class_count = static_cast<std::size_t>(std::max(max_label, 0)) + 1;
  }
  return ds;
}

void write_weight_set(const std::string& path,
                      const ClassifierWeightSet& set) {
  std::string out;
  for (std::size_t k = 0; k < set.class_index.size(); ++k) {
    out += std::to_string(set.class_index[k]);
    for (double v : set.weights.row(k)) out += ' ' + fmt_g17(v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

ClassifierWeightSet read_weight_set(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::size_t> classes;
  std::vector<std::vector<double>> rows;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    const std::string where = path + ":" + std::to_string(lineno);
    std::size_t cls = 0;
    if (!(ls >> cls)) throw FormatError(where + ": bad class index");
    std::vector<double> row;
    std::string tok;
    while (ls >> tok) row.push_back(parse_double(tok, where));
    if (row.empty()) throw FormatError(where + ": no weight values");
    if (!rows.empty() && row.size() != rows.front().size())
      throw FormatError(where + ": inconsistent row width");
    classes.push_back(cls);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw FormatError(path + ": no classifier rows");
  ClassifierWeightSet set;
  set.class_index = std::move(classes);
  set.weights = Matrix(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy(rows[i].begin(), rows[i].end(), set.weights.row(i).begin());
  return set;
}

void save_gcn_checkpoint(const std::string& path, const GcnModel& m) {
  std::string out("OSDRGCN1", 8);
  out += serialize_gcn_body(m);
  write_file_atomic(path, out);
}

GcnModel load_gcn_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  Cursor c{buf, path};
  check_magic(c, "OSDRGCN1");
  GcnModel m = deserialize_gcn_body(c);
  c.expect_end();
  return m;
}

void save_joint_checkpoint(const std::string& path, const Backbone& bb,
                           const GcnModel& gcnb, std::uint64_t seed,
                           std::uint64_t fingerprint) {
  std::string out("OSDRJNT1", 8);
  put<std::uint64_t>(out, seed);
  put<std::uint64_t>(out, fingerprint);
  put<std::uint64_t>(out, bb.extractor == ExtractorKind::Affine ? 1 : 0);
  put<std::uint64_t>(out, bb.feature_dim());
  put<std::uint64_t>(out, bb.class_count());
  put<std::uint64_t>(out, bb.known.size());
  for (std::size_t i : bb.known) put<std::uint64_t>(out, i);
  put<std::uint64_t>(out, bb.unknown.size());
  for (std::size_t i : bb.unknown) put<std::uint64_t>(out, i);
  if (bb.extractor == ExtractorKind::Affine) {
    put_matrix(out, bb.phi_w.value);
    put_matrix(out, bb.phi_b.value);
  }
  put_matrix(out, bb.psi_w.value);
  put_matrix(out, bb.psi_b.value);
  out += serialize_gcn_body(gcnb);
  write_file_atomic(path, out);
}

JointCheckpoint load_joint_checkpoint(const std::string& path) {
  const std::string buf = read_file(path);
  Cursor c{buf, path};
  check_magic(c, "OSDRJNT1");
  JointCheckpoint ck;
  ck.seed = c.scalar<std::uint64_t>("seed");
  ck.fingerprint = c.scalar<std::uint64_t>("fingerprint");
  const bool affine = c.scalar<std::uint64_t>("extractor kind") != 0;
  const auto d = c.scalar<std::uint64_t>("feature dim");
  const auto l_t = c.scalar<std::uint64_t>("class count");
  const auto n_known = c.scalar<std::uint64_t>("known count");
  std::vector<std::size_t> known(n_known);
  for (auto& i : known) i = c.scalar<std::uint64_t>("known id");
  const auto n_unknown = c.scalar<std::uint64_t>("unknown count");
  std::vector<std::size_t> unknown(n_unknown);
  for (auto& i : unknown) i = c.scalar<std::uint64_t>("unknown id");
  if (n_known + n_unknown != l_t || n_known == 0)
    throw FormatError(path + ": inconsistent class split");

  ck.bb = Backbone::init(d, n_known, n_unknown,
                         affine ? ExtractorKind::Affine
                                : ExtractorKind::Identity);
  ck.bb.known = std::move(known);
  ck.bb.unknown = std::move(unknown);
  if (affine) {
    ck.bb.phi_w.value = take_matrix(c, d, d, "phi weights");
    ck.bb.phi_b.value = take_matrix(c, 1, d, "phi bias");
  }
  ck.bb.psi_w.value = take_matrix(c, l_t, d, "psi weights");
  ck.bb.psi_b.value = take_matrix(c, 1, l_t, "psi bias");
  ck.gcnb = deserialize_gcn_body(c);
  c.expect_end();
  return ck;
}

void write_trace_csv(const std::string& path,
                     const std::vector<EpochLog>& trace) {
  std::string out =
      "epoch,l_cls,l_tran,l_lb,l_d,total,known_acc,unknown_acc,all_acc\n";
  for (const EpochLog& e : trace) {
    out += std::to_string(e.epoch);
    for (double v : {e.losses.l_cls, e.losses.l_tran, e.losses.l_lb,
                     e.losses.l_d, e.losses.total, e.known_acc,
                     e.unknown_acc, e.all_acc})
      out += ',' + fmt_g17(v);
    out += '\n';
  }
  write_file_atomic(path, out);
}

void write_loss_trace_csv(const std::string& path,
                          const std::vector<double>& trace) {
  std::string out = "step,loss\n";
  for (std::size_t i = 0; i < trace.size(); ++i)
    out += std::to_string(i) + ',' + fmt_g17(trace[i]) + '\n';
  write_file_atomic(path, out);
}

void write_pairs_csv(const std::string& path,
                     const std::vector<MatchedPair>& pairs) {
  std::string out = "target_idx,source_idx,feat_dist,resp_dist,pass\n";
  for (const MatchedPair& p : pairs) {
    out += std::to_string(p.target) + ',' + std::to_string(p.source) + ',' +
           fmt_g17(p.feat_dist) + ',' + fmt_g17(p.resp_dist) + ',' +
           (p.pass ? '1' : '0');
    out += '\n';
  }
  write_file_atomic(path, out);
}

std::string report_to_json(const EvalReport& rep) {
  json j;
  j["known_acc"] = rep.known_acc;
  j["unknown_acc"] = rep.unknown_acc;
  j["all_acc"] = rep.all_acc;
  j["known_total"] = rep.known_total;
  j["known_correct"] = rep.known_correct;
  j["unknown_total"] = rep.unknown_total;
  j["unknown_correct"] = rep.unknown_correct;
  json per_class = json::object();
  for (const auto& [cls, count] : rep.per_class_count) {
    json entry;
    entry["count"] = count;
    entry["acc"] = rep.per_class_acc.at(cls);
    per_class[std::to_string(cls)] = entry;
  }
  j["per_class"] = per_class;
  j["fingerprint"] = hex64(rep.config_fingerprint);
  j["seed"] = rep.seed;
  return j.dump(2) + "\n";
}

EvalReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: bad json: ") + e.what());
  }
  try {
    EvalReport rep;
    rep.known_acc = j.at("known_acc").get<double>();
    rep.unknown_acc = j.at("unknown_acc").get<double>();
    rep.all_acc = j.at("all_acc").get<double>();
    rep.known_total = j.at("known_total").get<std::size_t>();
    rep.known_correct = j.at("known_correct").get<std::size_t>();
    rep.unknown_total = j.at("unknown_total").get<std::size_t>();
    rep.unknown_correct = j.at("unknown_correct").get<std::size_t>();
    for (const auto& [key, entry] : j.at("per_class").items()) {
      const auto cls = static_cast<std::size_t>(std::stoull(key));
      rep.per_class_count[cls] = entry.at("count").get<std::size_t>();
      rep.per_class_acc[cls] = entry.at("acc").get<double>();
    }
    rep.config_fingerprint =
        parse_hex64(j.at("fingerprint").get<std::string>(), "report");
    rep.seed = j.at("seed").get<std::uint64_t>();
    return rep;
  } catch (const json::exception& e) {
    throw FormatError(std::string("report: missing or mistyped field: ") +
                      e.what());
  }
}

void write_report_json(const std::string& path, const EvalReport& rep) {
  write_file_atomic(path, report_to_json(rep));
}

EvalReport read_report_json(const std::string& path) {
  return report_from_json(read_file(path));
}

std::string report_to_text(const EvalReport& rep) {
  char buf[96];
  std::string out;
  out += "subset     accuracy   correct/total\n";
  const auto line = [&](const char* name, double acc, std::size_t correct,
                        std::size_t total) {
    std::snprintf(buf, sizeof buf, "%-9s  %8.4f   %7zu/%zu\n", name, acc,
                  correct, total);
    out += buf;
  };
  line("known", rep.known_acc, rep.known_correct, rep.known_total);
  line("unknown", rep.unknown_acc, rep.unknown_correct, rep.unknown_total);
  line("all", rep.all_acc, rep.known_correct + rep.unknown_correct,
       rep.known_total + rep.unknown_total);
  out += "fingerprint " + hex64(rep.config_fingerprint) + "\n";
  out += "seed " + std::to_string(rep.seed) + "\n";
  return out;
}

void write_report_text(const std::string& path, const EvalReport& rep) {
  write_file_atomic(path, report_to_text(rep));
}

std::string benchmark_to_json(const MatcherBenchmark& b) {
  json j;
  j["n_source"] = b.n_source;
  j["n_target"] = b.n_target;
  j["dim"] = b.dim;
  j["seed"] = b.seed;
  j["greedy_ms"] = b.greedy_ms;
  j["hungarian_ms"] = b.hungarian_ms;
  j["greedy_acc"] = b.greedy_acc;
  j["hungarian_acc"] = b.hungarian_acc;
  return j.dump(2) + "\n";
}

void write_benchmark_json(const std::string& path,
                          const MatcherBenchmark& b) {
  write_file_atomic(path, benchmark_to_json(b));
}

}  // namespace osdr
