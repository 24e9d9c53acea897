#include "osdr/manifest.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "osdr/errors.hpp"
#include "osdr/io.hpp"

namespace osdr {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end == v.c_str() || *end != '\0')
    throw ConfigError(where + ": bad number '" + v + "'");
  return x;
}

std::uint64_t to_u64(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const unsigned long long x = std::strtoull(v.c_str(), &end, 10);
  if (end == v.c_str() || *end != '\0' || v[0] == '-')
    throw ConfigError(where + ": bad integer '" + v + "'");
  return x;
}

std::size_t to_size(const std::string& v, const std::string& where) {
  return static_cast<std::size_t>(to_u64(v, where));
}

bool to_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": bad boolean '" + v + "'");
}

void set_instance(RunManifest& m, const std::string& key,
                  const std::string& val, const std::string& where) {
  SynthSpec& s = m.spec;
  if (key == "name") {
    // Base spec from the named instance; later keys override fields.
    s = reference_instance(val);
    m.instance = val;
  } else if (key == "total_classes") s.total_classes = to_size(val, where);
  else if (key == "openness") s.openness = to_double(val, where);
  else if (key == "feature_dim") s.feature_dim = to_size(val, where);
  else if (key == "source_per_class") s.source_per_class = to_size(val, where);
  else if (key == "target_per_class") s.target_per_class = to_size(val, where);
  else if (key == "shift_norm") s.shift_norm = to_double(val, where);
  else if (key == "shift_angle_deg") s.shift_angle_deg = to_double(val, where);
  else if (key == "separation") s.separation = to_double(val, where);
  else if (key == "semantic_dim") s.semantic_dim = to_size(val, where);
  else if (key == "semantic_noise") s.semantic_noise = to_double(val, where);
  else if (key == "hierarchy_spread") s.hierarchy_spread = to_double(val, where);
  else if (key == "seed") s.seed = to_u64(val, where);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void set_stage_a(RunManifest& m, const std::string& key,
                 const std::string& val, const std::string& where) {
  StageAConfig& s = m.cfg.stage_a;
  if (key == "hidden_dim") s.hidden_dim = to_size(val, where);
  else if (key == "kernel") s.kernel = parse_kernel(val);
  else if (key == "leaky_slope") s.leaky_slope = to_double(val, where);
  else if (key == "lr") s.train.lr = to_double(val, where);
  else if (key == "steps") s.train.steps = to_size(val, where);
  else if (key == "seed") s.train.seed = to_u64(val, where);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void set_joint(RunManifest& m, const std::string& key, const std::string& val,
               const std::string& where) {
  JointConfig& s = m.cfg.joint;
  if (key == "epochs") s.epochs = to_size(val, where);
  else if (key == "batch_size") s.batch_size = to_size(val, where);
  else if (key == "lr") s.lr = to_double(val, where);
  else if (key == "seed") s.seed = to_u64(val, where);
  else if (key == "warmup_steps") s.warmup_steps = to_size(val, where);
  else if (key == "refresh_unknown") s.refresh_unknown = to_bool(val, where);
  else if (key == "extractor") s.extractor = parse_extractor(val);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void set_smo(RunManifest& m, const std::string& key, const std::string& val,
             const std::string& where) {
  SmoConfig& s = m.cfg.smo;
  if (key == "tau_mode") s.tau_mode = parse_tau_mode(val);
  else if (key == "tau") s.tau = to_double(val, where);
  else if (key == "reduction") s.reduction = parse_reduction(val);
  else if (key == "rematch_period") s.rematch_period = to_size(val, where);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void set_losses(RunManifest& m, const std::string& key, const std::string& val,
                const std::string& where) {
  LossWeights& w = m.cfg.weights;
  if (key == "cls") w.cls = to_double(val, where);
  else if (key == "tran") w.tran = to_double(val, where);
  else if (key == "lb") w.lb = to_double(val, where);
  else if (key == "d") w.d = to_double(val, where);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

void set_ablation(RunManifest& m, const std::string& key,
                  const std::string& val, const std::string& where) {
  AblationSwitches& a = m.cfg.ablation;
  if (key == "attention") a.attention = to_bool(val, where);
  else if (key == "smo") a.smo = to_bool(val, where);
  else throw ConfigError(where + ": unknown key '" + key + "'");
}

}  // namespace

RunManifest parse_manifest(const std::string& text) {
  RunManifest m;
  std::istringstream in(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.erase(cut);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "manifest line " + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError(where + ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "instance" && section != "stage_a" &&
          section != "joint" && section != "smo" && section != "losses" &&
          section != "ablation")
        throw ConfigError(where + ": unknown section '" + section + "'");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError(where + ": empty key or value");
    if (section.empty())
      throw ConfigError(where + ": key before any section");
    if (section == "instance") set_instance(m, key, val, where);
    else if (section == "stage_a") set_stage_a(m, key, val, where);
    else if (section == "joint") set_joint(m, key, val, where);
    else if (section == "smo") set_smo(m, key, val, where);
    else if (section == "losses") set_losses(m, key, val, where);
    else set_ablation(m, key, val, where);
  }
  validate(m.spec);
  validate(m.cfg.smo);
  return m;
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

std::string canonical_manifest(const RunManifest& m) {
  const SynthSpec& s = m.spec;
  const PipelineConfig& c = m.cfg;
  std::string out = "[instance]\n";
  if (!m.instance.empty()) out += "name = " + m.instance + "\n";
  out += "total_classes = " + std::to_string(s.total_classes) + "\n";
  out += "openness = " + fmt_g17(s.openness) + "\n";
  out += "feature_dim = " + std::to_string(s.feature_dim) + "\n";
  out += "source_per_class = " + std::to_string(s.source_per_class) + "\n";
  out += "target_per_class = " + std::to_string(s.target_per_class) + "\n";
  out += "shift_norm = " + fmt_g17(s.shift_norm) + "\n";
  out += "shift_angle_deg = " + fmt_g17(s.shift_angle_deg) + "\n";
  out += "separation = " + fmt_g17(s.separation) + "\n";
  out += "semantic_dim = " + std::to_string(s.semantic_dim) + "\n";
  out += "semantic_noise = " + fmt_g17(s.semantic_noise) + "\n";
  out += "hierarchy_spread = " + fmt_g17(s.hierarchy_spread) + "\n";
  out += "seed = " + std::to_string(s.seed) + "\n";
  out += "\n[stage_a]\n";
  out += "hidden_dim = " + std::to_string(c.stage_a.hidden_dim) + "\n";
  out += "kernel = " + std::string(kernel_name(c.stage_a.kernel)) + "\n";
  out += "leaky_slope = " + fmt_g17(c.stage_a.leaky_slope) + "\n";
  out += "lr = " + fmt_g17(c.stage_a.train.lr) + "\n";
  out += "steps = " + std::to_string(c.stage_a.train.steps) + "\n";
  out += "seed = " + std::to_string(c.stage_a.train.seed) + "\n";
  out += "\n[joint]\n";
  out += "epochs = " + std::to_string(c.joint.epochs) + "\n";
  out += "batch_size = " + std::to_string(c.joint.batch_size) + "\n";
  out += "lr = " + fmt_g17(c.joint.lr) + "\n";
  out += "seed = " + std::to_string(c.joint.seed) + "\n";
  out += "warmup_steps = " + std::to_string(c.joint.warmup_steps) + "\n";
  out += std::string("refresh_unknown = ") +
         (c.joint.refresh_unknown ? "true" : "false") + "\n";
  out += "extractor = " + std::string(extractor_name(c.joint.extractor)) +
         "\n";
  out += "\n[smo]\n";
  out += "tau_mode = " + std::string(tau_mode_name(c.smo.tau_mode)) + "\n";
  out += "tau = " + fmt_g17(c.smo.tau) + "\n";
  out += "reduction = " + std::string(reduction_name(c.smo.reduction)) + "\n";
  out += "rematch_period = " + std::to_string(c.smo.rematch_period) + "\n";
  out += "\n[losses]\n";
  out += "cls = " + fmt_g17(c.weights.cls) + "\n";
  out += "tran = " + fmt_g17(c.weights.tran) + "\n";
  out += "lb = " + fmt_g17(c.weights.lb) + "\n";
  out += "d = " + fmt_g17(c.weights.d) + "\n";
  out += "\n[ablation]\n";
  out += std::string("attention = ") +
         (c.ablation.attention ? "true" : "false") + "\n";
  out += std::string("smo = ") + (c.ablation.smo ? "true" : "false") + "\n";
  return out;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  write_file_atomic(path, canonical_manifest(m));
}

std::uint64_t manifest_fingerprint(const RunManifest& m) {
  const std::string text = canonical_manifest(m);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void apply_seed(RunManifest& m, std::uint64_t seed) {
  m.spec.seed = seed;
  m.cfg.stage_a.train.seed = seed;
  m.cfg.joint.seed = seed;
}

}  // namespace osdr
