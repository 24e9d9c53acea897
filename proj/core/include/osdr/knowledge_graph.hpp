#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "osdr/matrix.hpp"

namespace osdr {

enum class NodeRole { Known, Unknown, Aux };

NodeRole parse_role(const std::string& s);
const char* role_name(NodeRole r);

/// Class-relationship graph: one node per category (plus auxiliary
/// hierarchy nodes), each carrying a semantic vector. Immutable after
/// construction; adjacency is symmetric and deduplicated, vectors are
/// L2-normalized rows.
class KnowledgeGraph {
 public:
  KnowledgeGraph(std::vector<std::string> names, Matrix vectors,
                 std::vector<NodeRole> roles,
                 const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges);

  std::size_t node_count() const { return names_.size(); }
  std::size_t semantic_dim() const { return vectors_.cols(); }

  const Matrix& vectors() const { return vectors_; }
  const std::string& name(std::uint32_t i) const { return names_[i]; }
  NodeRole role(std::uint32_t i) const { return roles_[i]; }
  std::optional<std::uint32_t> index_of(const std::string& name) const;

  /// First-order neighbors of i, ascending, without i itself.
  const std::vector<std::uint32_t>& neighbors(std::uint32_t i) const;
  /// First-order neighbors of i plus i itself, ascending.
  std::vector<std::uint32_t> neighborhood(std::uint32_t i) const;
  /// Row-major n*n mask: adjacency plus self-loops.
  std::vector<std::uint8_t> attention_mask() const;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edge_list() const;  // i < j

 private:
  std::vector<std::string> names_;
  Matrix vectors_;
  std::vector<NodeRole> roles_;
  std::vector<std::vector<std::uint32_t>> adj_;
};

/// Node indices grouped by role. Disjoint, covering, with at least one
/// known and one unknown node.
struct NodeRoleSplit {
  std::vector<std::uint32_t> known;
  std::vector<std::uint32_t> unknown;
  std::vector<std::uint32_t> aux;
};

NodeRoleSplit role_split(const KnowledgeGraph& g);

struct ReachabilityReport {
  bool ok = true;
  std::vector<std::string> unreachable_unknown;
};

/// ok iff every unknown node has a path to some known node.
ReachabilityReport validate_reachability(const KnowledgeGraph& g,
                                         const NodeRoleSplit& split);

// File formats:
//   edges:      "name_a<TAB>name_b" per line, '#' comments ignored
//   embeddings: "name v1 v2 ... vc", whitespace separated
//   roles:      "name<TAB>role", role in {known, unknown, aux}
KnowledgeGraph load_graph(const std::string& edge_file,
                          const std::string& embedding_file,
                          const std::string& roles_file);
void save_graph(const KnowledgeGraph& g, const std::string& edge_file,
                const std::string& embedding_file, const std::string& roles_file);

}  // namespace osdr
