#include "osdr/knowledge_graph.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "osdr/errors.hpp"

namespace osdr {

NodeRole parse_role(const std::string& s) {
  if (s == "known") return NodeRole::Known;
  if (s == "unknown") return NodeRole::Unknown;
  if (s == "aux") return NodeRole::Aux;
  throw FormatError("unknown role '" + s + "'");
}

const char* role_name(NodeRole r) {
  switch (r) {
    case NodeRole::Known: return "known";
    case NodeRole::Unknown: return "unknown";
    case NodeRole::Aux: return "aux";
  }
  return "?";
}

KnowledgeGraph::KnowledgeGraph(
    std::vector<std::string> names, Matrix vectors, std::vector<NodeRole> roles,
    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges)
    : names_(std::move(names)), vectors_(std::move(vectors)), roles_(std::move(roles)) {
  const std::size_t n = names_.size();
  if (vectors_.rows() != n || roles_.size() != n)
    throw UsageError("KnowledgeGraph: names/vectors/roles size mismatch");
  {
    std::unordered_map<std::string, int> seen;
    for (const auto& nm : names_)
      if (++seen[nm] > 1) throw FormatError("duplicate node name '" + nm + "'");
  }
  // Normalize semantic vectors row-wise. Rows already within 1e-12 of
  // unit norm are left untouched so that load->save->load is idempotent.
  for (std::size_t i = 0; i < n; ++i) {
    const double nrm = norm2(vectors_.row(i));
    if (nrm < 1e-12 || std::abs(nrm - 1.0) < 1e-12) continue;
    for (double& v : vectors_.row(i)) v /= nrm;
  }
  ensure_finite(vectors_, "KnowledgeGraph vectors");

  adj_.assign(n, {});
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) throw UsageError("edge endpoint out of range");
    if (a == b) continue;  // self-loops are implicit in neighborhoods
    adj_[a].push_back(b);
    adj_[b].push_back(a);
  }
  for (auto& nbrs : adj_) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
  }
}

std::optional<std::uint32_t> KnowledgeGraph::index_of(const std::string& name) const {
  for (std::uint32_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

const std::vector<std::uint32_t>& KnowledgeGraph::neighbors(std::uint32_t i) const {
  if (i >= adj_.size()) throw UsageError("node index out of range");
  return adj_[i];
}

std::vector<std::uint32_t> KnowledgeGraph::neighborhood(std::uint32_t i) const {
  const auto& nbrs = neighbors(i);
  std::vector<std::uint32_t> out;
  out.reserve(nbrs.size() + 1);
  out = nbrs;
  out.insert(std::lower_bound(out.begin(), out.end(), i), i);
  return out;
}

std::vector<std::uint8_t> KnowledgeGraph::attention_mask() const {
  const std::size_t n = node_count();
  std::vector<std::uint8_t> mask(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    mask[i * n + i] = 1;
    for (auto j : adj_[i]) mask[i * n + j] = 1;
  }
  return mask;
}

std::vector<std::pair<std::uint32_t, std::uint32_t>> KnowledgeGraph::edge_list() const {
  std::vector<std::pair<std::uint32_t, std::uint32_t>> out;
  for (std::uint32_t i = 0; i < adj_.size(); ++i)
    for (auto j : adj_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

NodeRoleSplit role_split(const KnowledgeGraph& g) {
  NodeRoleSplit s;
  for (std::uint32_t i = 0; i < g.node_count(); ++i) {
    switch (g.role(i)) {
      case NodeRole::Known: s.known.push_back(i); break;
      case NodeRole::Unknown: s.unknown.push_back(i); break;
      case NodeRole::Aux: s.aux.push_back(i); break;
    }
  }
  if (s.known.empty()) throw UsageError("role split: no known nodes");
  if (s.unknown.empty()) throw UsageError("role split: no unknown nodes");
  return s;
}

ReachabilityReport validate_reachability(const KnowledgeGraph& g,
                                         const NodeRoleSplit& split) {
  std::vector<std::uint8_t> reached(g.node_count(), 0);
  std::deque<std::uint32_t> queue;
  for (auto k : split.known) {
    reached[k] = 1;
    queue.push_back(k);
  }
  while (!queue.empty()) {
    const auto cur = queue.front();
    queue.pop_front();
    for (auto nb : g.neighbors(cur)) {
      if (!reached[nb]) {
        reached[nb] = 1;
        queue.push_back(nb);
      }
    }
  }
  ReachabilityReport report;
  for (auto u : split.unknown) {
    if (!reached[u]) {
      report.ok = false;
      report.unreachable_unknown.push_back(g.name(u));
    }
  }
  return report;
}

namespace {

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  return in;
}

bool blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

void write_double(std::ofstream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

KnowledgeGraph load_graph(const std::string& edge_file,
                          const std::string& embedding_file,
                          const std::string& roles_file) {
  // Roles file defines the node set and the node order.
  std::vector<std::string> names;
  std::vector<NodeRole> roles;
  std::unordered_map<std::string, std::uint32_t> index;
  {
    auto in = open_or_throw(roles_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (blank_or_comment(line)) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw FormatError(roles_file + ":" + std::to_string(lineno) +
                          ": expected name<TAB>role");
      std::string name = line.substr(0, tab);
      std::string role = line.substr(tab + 1);
      while (!role.empty() && std::isspace(static_cast<unsigned char>(role.back())))
        role.pop_back();
      if (index.count(name))
        throw FormatError(roles_file + ":" + std::to_string(lineno) +
                          ": duplicate node '" + name + "'");
      index[name] = static_cast<std::uint32_t>(names.size());
      names.push_back(std::move(name));
      roles.push_back(parse_role(role));
    }
  }
  if (names.empty()) throw FormatError(roles_file + ": no nodes");

  // Embeddings; entries for names outside the roles file are ignored.
  Matrix vectors;
  std::vector<std::uint8_t> have(names.size(), 0);
  {
    auto in = open_or_throw(embedding_file);
    std::string line;
    std::size_t lineno = 0;
    std::size_t dim = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (blank_or_comment(line)) continue;
      std::istringstream ss(line);
      std::string name;
      ss >> name;
      std::vector<double> vals;
      double v;
      while (ss >> v) vals.push_back(v);
      if (!ss.eof())
        throw FormatError(embedding_file + ":" + std::to_string(lineno) +
                          ": bad number");
      if (vals.empty())
        throw FormatError(embedding_file + ":" + std::to_string(lineno) +
                          ": no values for '" + name + "'");
      if (dim == 0) {
        dim = vals.size();
        vectors = Matrix(names.size(), dim);
      } else if (vals.size() != dim) {
        throw FormatError(embedding_file + ":" + std::to_string(lineno) +
                          ": dimension " + std::to_string(vals.size()) +
                          " != " + std::to_string(dim));
      }
      auto it = index.find(name);
      if (it == index.end()) continue;
      have[it->second] = 1;
      std::copy(vals.begin(), vals.end(), vectors.row(it->second).begin());
    }
  }
  std::string missing;
  for (std::size_t i = 0; i < names.size(); ++i)
    if (!have[i]) missing += (missing.empty() ? "" : ", ") + names[i];
  if (!missing.empty())
    throw FormatError(embedding_file + ": missing embedding for: " + missing);

  // Edges.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  {
    auto in = open_or_throw(edge_file);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (blank_or_comment(line)) continue;
      const auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw FormatError(edge_file + ":" + std::to_string(lineno) +
                          ": expected name_a<TAB>name_b");
      std::string a = line.substr(0, tab);
      std::string b = line.substr(tab + 1);
      while (!b.empty() && std::isspace(static_cast<unsigned char>(b.back())))
        b.pop_back();
      auto ia = index.find(a);
      auto ib = index.find(b);
      if (ia == index.end())
        throw FormatError(edge_file + ":" + std::to_string(lineno) +
                          ": unknown node '" + a + "'");
      if (ib == index.end())
        throw FormatError(edge_file + ":" + std::to_string(lineno) +
                          ": unknown node '" + b + "'");
      edges.emplace_back(ia->second, ib->second);
    }
  }
  return KnowledgeGraph(std::move(names), std::move(vectors), std::move(roles), edges);
}

void save_graph(const KnowledgeGraph& g, const std::string& edge_file,
                const std::string& embedding_file, const std::string& roles_file) {
  {
    std::ofstream out(roles_file);
    if (!out) throw IoError("cannot write '" + roles_file + "'");
    for (std::uint32_t i = 0; i < g.node_count(); ++i)
      out << g.name(i) << '\t' << role_name(g.role(i)) << '\n';
  }
  {
    std::ofstream out(embedding_file);
    if (!out) throw IoError("cannot write '" + embedding_file + "'");
    for (std::uint32_t i = 0; i < g.node_count(); ++i) {
      out << g.name(i);
      for (double v : g.vectors().row(i)) {
        out << ' ';
        write_double(out, v);
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(edge_file);
    if (!out) throw IoError("cannot write '" + edge_file + "'");
    for (auto [a, b] : g.edge_list())
      out << g.name(a) << '\t' << g.name(b) << '\n';
  }
}

}  // namespace osdr
