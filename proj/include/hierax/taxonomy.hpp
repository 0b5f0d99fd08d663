/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "hierax/util.hpp"

namespace hierax {

/// Node identifiers are plain strings: CUI codes for clinical trees, slugs
/// for toy data and the special labels.
using NodeId = std::string;

/// The three concept trees plus the flat group of special labels
/// (normal / exclude / unchanged / suboptimal-study).
enum class Group { findings, diagnoses, localizations, special };

const char* group_name(Group g);

struct TaxonomyNode {
  NodeId id;
  std::string display_name;
  std::optional<NodeId> parent;  // absent for tree roots and special labels
  Group group = Group::findings;

  bool is_special() const { return group == Group::special; }
};

struct TaxonomyError : HieraxError {
  using HieraxError::HieraxError;
};

/// One raw node entry, before validation. `line` is the 1-based source line
/// for diagnostics (0 when constructed programmatically).
struct NodeRow {
  NodeId id;
  std::string display_name;
  std::optional<NodeId> parent;
  Group group = Group::findings;
  int line = 0;
};

struct Violation {
  std::string kind;     // e.g. "duplicate id", "cycle detected"
  NodeId id;            // offending node
  int line = 0;
  std::string message;  // human-readable, includes id and line
};

/// Checks NodeRow lists against the forest invariants: unique ids, resolvable
/// parents, acyclicity, exactly one root per non-empty tree, flat specials.
/// Returns all violations; empty means the rows form a valid taxonomy.
std::vector<Violation> validate_rows(const std::vector<NodeRow>& rows);

/// Immutable concept forest with a canonical dense index in document order.
/// Safe to share across threads after construction.
class Taxonomy {
 public:
  /// Validates and builds; throws TaxonomyError with the first violation.
  static Taxonomy from_rows(std::vector<NodeRow> rows);

  int size() const { return static_cast<int>(nodes_.size()); }
  const TaxonomyNode& node(int index) const { return nodes_.at(static_cast<std::size_t>(index)); }
  const std::vector<TaxonomyNode>& nodes() const { return nodes_; }

  bool contains(const NodeId& id) const { return index_.count(id) != 0; }
  /// Canonical dense index; throws on unknown id.
  int index_of(const NodeId& id) const;
  const NodeId& id_of(int index) const { return node(index).id; }

  /// Parent index or -1 for roots and special labels.
  int parent_index(int index) const { return parents_[static_cast<std::size_t>(index)]; }
  const std::vector<int>& child_indices(int index) const {
    return children_[static_cast<std::size_t>(index)];
  }
  bool is_leaf(int index) const { return children_[static_cast<std::size_t>(index)].empty(); }

  /// Chain parent, grandparent, ..., root; excludes `id`. Empty for roots
  /// and special labels.
  std::vector<NodeId> ancestors(const NodeId& id) const;
  std::vector<int> ancestor_indices(int index) const;

  /// Transitive closure of children, excluding `id`. Empty for leaves.
  std::set<NodeId> descendants(const NodeId& id) const;
  std::vector<int> descendant_indices(int index) const;

  /// Leaf nodes of one tree, in canonical order.
  std::vector<int> leaves(Group group) const;
  /// All (child, parent) edges inside the three trees, in child index order.
  std::vector<std::pair<int, int>> edges() const;

  /// Model output nodes in canonical order: every node, or the non-special
  /// ones when `include_specials` is false.
  std::vector<int> output_indices(bool include_specials) const;
  std::vector<NodeId> output_ids(bool include_specials) const;

  /// Re-checks the invariants of an already built object. Always empty for
  /// objects produced by from_rows; exists so deserialized or hand-patched
  /// state can be audited.
  std::vector<Violation> validate() const;

  /// Canonical document form; parse(serialize()) reproduces ids, parents,
  /// display names and index order exactly.
  std::string serialize() const;

  /// FNV-1a over the canonical serialization; stored in checkpoints so that
  /// prediction refuses a mismatched taxonomy.
  std::uint64_t checksum() const;

 private:
  std::vector<TaxonomyNode> nodes_;
  std::vector<int> parents_;
  std::vector<std::vector<int>> children_;
  std::unordered_map<NodeId, int> index_;
};

/// Parses the taxonomy document format:
///
///   # comment
///   [findings]
///   root-id "Display Name"
///     child-id "Name"            <- nesting by 2-space indentation
///   late-id "Name" -> parent-id  <- explicit parent reference
///   [special]
///   normal "normal"
///
/// Sections may appear in any order; [special] entries are flat. Errors carry
/// the offending id and line number.
Taxonomy parse_taxonomy(const std::string& text);
Taxonomy load_taxonomy(const std::filesystem::path& path);

/// Indented tree rendering in the box-drawing style used by `taxonomy show`.
std::string render_tree(const Taxonomy& t);

}  // namespace hierax
