/*
 * Copyright (C) 2026 The hierax authors
 * SPDX-License-Identifier: Apache-2.0
 */
#include "hierax/taxonomy.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

namespace hierax {

namespace {

bool valid_id(std::string_view id) {
  if (id.empty()) return false;
  for (const char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

std::optional<Group> group_from_name(std::string_view name) {
  if (name == "findings") return Group::findings;
  if (name == "diagnoses") return Group::diagnoses;
  if (name == "localizations") return Group::localizations;
  if (name == "special") return Group::special;
  return std::nullopt;
}

std::string where(const NodeRow& row) {
  if (row.line > 0) return " (line " + std::to_string(row.line) + ")";
  return "";
}

}  // namespace

const char* group_name(Group g) {
  switch (g) {
    case Group::findings: return "findings";
    case Group::diagnoses: return "diagnoses";
    case Group::localizations: return "localizations";
    case Group::special: return "special";
  }
  return "?";
}

std::vector<Violation> validate_rows(const std::vector<NodeRow>& rows) {
  std::vector<Violation> out;
  auto add = [&out](std::string kind, const NodeRow& row, std::string message) {
    out.push_back(Violation{std::move(kind), row.id, row.line, std::move(message)});
  };

  if (rows.empty()) {
    out.push_back(Violation{"empty document", "", 0, "empty document: no nodes declared"});
    return out;
  }

  std::unordered_map<NodeId, std::size_t> first_seen;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const NodeRow& row = rows[i];
    if (!valid_id(row.id)) {
      add("invalid id", row, "invalid id '" + row.id + "'" + where(row));
      continue;
    }
    if (row.display_name.find('"') != std::string::npos ||
        row.display_name.find('\n') != std::string::npos) {
      add("invalid display name", row, "invalid display name for '" + row.id + "'" + where(row));
    }
    const auto [it, inserted] = first_seen.emplace(row.id, i);
    if (!inserted) {
      add("duplicate id", row, "duplicate id '" + row.id + "'" + where(row));
    }
  }

  for (const NodeRow& row : rows) {
    if (!row.parent) continue;
    if (row.group == Group::special) {
      add("special with parent", row,
          "special label '" + row.id + "' must not have a parent" + where(row));
      continue;
    }
    const auto it = first_seen.find(*row.parent);
    if (it == first_seen.end()) {
      add("unknown parent reference", row,
          "unknown parent reference '" + *row.parent + "' on node '" + row.id + "'" + where(row));
      continue;
    }
    const NodeRow& parent = rows[it->second];
    if (parent.group == Group::special) {
      add("special used as parent", row,
          "special label '" + parent.id + "' cannot be a parent of '" + row.id + "'" + where(row));
    } else if (parent.group != row.group) {
      add("parent in different tree", row,
          "node '" + row.id + "' has parent '" + parent.id + "' in a different tree" + where(row));
    }
  }

  // Cycle detection over parent links; colors: 0 unvisited, 1 in progress, 2 done.
  std::vector<int> color(rows.size(), 0);
  auto parent_of = [&](std::size_t i) -> std::optional<std::size_t> {
    const NodeRow& row = rows[i];
    if (!row.parent) return std::nullopt;
    const auto it = first_seen.find(*row.parent);
    if (it == first_seen.end()) return std::nullopt;
    return it->second;
  };
  for (std::size_t start = 0; start < rows.size(); ++start) {
    if (color[start] != 0) continue;
    std::vector<std::size_t> path;
    std::size_t cur = start;
    while (true) {
      if (color[cur] == 1) {  // closed a loop within this walk
        add("cycle detected", rows[cur], "cycle detected at '" + rows[cur].id + "'" + where(rows[cur]));
        break;
      }
      if (color[cur] == 2) break;
      color[cur] = 1;
      path.push_back(cur);
      const auto next = parent_of(cur);
      if (!next) break;
      cur = *next;
    }
    for (const std::size_t i : path) color[i] = 2;
  }

  // Exactly one root per non-empty tree.
  for (const Group g : {Group::findings, Group::diagnoses, Group::localizations}) {
    std::vector<std::size_t> roots;
    std::size_t members = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].group != g) continue;
      ++members;
      if (!rows[i].parent) roots.push_back(i);
    }
    if (members == 0) continue;
    if (roots.empty()) {
      // Only reachable together with a cycle, which is already reported.
      continue;
    }
    for (std::size_t k = 1; k < roots.size(); ++k) {
      add("multiple roots", rows[roots[k]],
          std::string("tree '") + group_name(g) + "' has more than one root: '" +
              rows[roots[k]].id + "'" + where(rows[roots[k]]));
    }
  }

  return out;
}

Taxonomy Taxonomy::from_rows(std::vector<NodeRow> rows) {
  const std::vector<Violation> violations = validate_rows(rows);
  if (!violations.empty()) throw TaxonomyError(violations.front().message);

  Taxonomy t;
  t.nodes_.reserve(rows.size());
  for (const NodeRow& row : rows) {
    t.index_.emplace(row.id, static_cast<int>(t.nodes_.size()));
    t.nodes_.push_back(TaxonomyNode{row.id, row.display_name, row.parent, row.group});
  }
  t.parents_.assign(t.nodes_.size(), -1);
  t.children_.assign(t.nodes_.size(), {});
  for (std::size_t i = 0; i < t.nodes_.size(); ++i) {
    if (!t.nodes_[i].parent) continue;
    const int p = t.index_.at(*t.nodes_[i].parent);
    t.parents_[i] = p;
    t.children_[static_cast<std::size_t>(p)].push_back(static_cast<int>(i));
  }
  return t;
}

int Taxonomy::index_of(const NodeId& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw TaxonomyError("unknown id: '" + id + "'");
  return it->second;
}

std::vector<int> Taxonomy::ancestor_indices(int index) const {
  std::vector<int> chain;
  int cur = parent_index(index);
  while (cur >= 0) {
    chain.push_back(cur);
    cur = parent_index(cur);
  }
  return chain;
}

std::vector<NodeId> Taxonomy::ancestors(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const int ix : ancestor_indices(index_of(id))) out.push_back(id_of(ix));
  return out;
}

std::vector<int> Taxonomy::descendant_indices(int index) const {
  std::vector<int> out;
  std::deque<int> queue(child_indices(index).begin(), child_indices(index).end());
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    out.push_back(cur);
    for (const int c : child_indices(cur)) queue.push_back(c);
  }
  return out;
}

std::set<NodeId> Taxonomy::descendants(const NodeId& id) const {
  std::set<NodeId> out;
  for (const int ix : descendant_indices(index_of(id))) out.insert(id_of(ix));
  return out;
}

std::vector<int> Taxonomy::leaves(Group group) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (nodes_[static_cast<std::size_t>(i)].group == group && is_leaf(i)) out.push_back(i);
  }
  return out;
}

std::vector<std::pair<int, int>> Taxonomy::edges() const {
  std::vector<std::pair<int, int>> out;
  for (int i = 0; i < size(); ++i) {
    const int p = parent_index(i);
    if (p >= 0) out.emplace_back(i, p);
  }
  return out;
}

std::vector<int> Taxonomy::output_indices(bool include_specials) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (include_specials || !nodes_[static_cast<std::size_t>(i)].is_special()) out.push_back(i);
  }
  return out;
}

std::vector<NodeId> Taxonomy::output_ids(bool include_specials) const {
  std::vector<NodeId> out;
  for (const int ix : output_indices(include_specials)) out.push_back(id_of(ix));
  return out;
}

std::vector<Violation> Taxonomy::validate() const {
  std::vector<NodeRow> rows;
  rows.reserve(nodes_.size());
  for (const TaxonomyNode& n : nodes_) {
    rows.push_back(NodeRow{n.id, n.display_name, n.parent, n.group, 0});
  }
  return validate_rows(rows);
}

std::string Taxonomy::serialize() const {
  std::ostringstream out;
  std::optional<Group> section;
  std::vector<NodeId> stack;  // currently open ancestor chain
  for (const TaxonomyNode& n : nodes_) {
    if (!section || *section != n.group) {
      section = n.group;
      stack.clear();
      out << '[' << group_name(n.group) << "]\n";
    }
    std::size_t level = 0;
    bool explicit_parent = false;
    if (n.parent) {
      const auto it = std::find(stack.begin(), stack.end(), *n.parent);
      if (it != stack.end()) {
        stack.resize(static_cast<std::size_t>(it - stack.begin()) + 1);
        level = stack.size();
      } else {
        stack.clear();
        explicit_parent = true;
      }
    } else {
      stack.clear();
    }
    out << std::string(2 * level, ' ') << n.id << " \"" << n.display_name << '"';
    if (explicit_parent) out << " -> " << *n.parent;
    out << '\n';
    if (!n.is_special()) stack.push_back(n.id);
  }
  return out.str();
}

std::uint64_t Taxonomy::checksum() const {
  return fnv1a64(serialize());
}

Taxonomy parse_taxonomy(const std::string& text) {
  const std::vector<std::string> lines = split_lines(text);
  std::vector<NodeRow> rows;
  std::optional<Group> section;
  std::vector<NodeId> stack;

  auto fail = [](int line, const std::string& message) {
    throw TaxonomyError("line " + std::to_string(line) + ": " + message);
  };

  for (std::size_t li = 0; li < lines.size(); ++li) {
    const int lineno = static_cast<int>(li) + 1;
    const std::string& raw = lines[li];
    const std::string stripped = trim(raw);
    if (stripped.empty() || stripped[0] == '#') continue;

    if (stripped[0] == '[') {
      if (stripped.back() != ']') fail(lineno, "malformed section header: " + stripped);
      const auto g = group_from_name(stripped.substr(1, stripped.size() - 2));
      if (!g) fail(lineno, "unknown section: " + stripped);
      section = *g;
      stack.clear();
      continue;
    }
    if (!section) fail(lineno, "node entry before any [section] header");

    std::size_t indent = 0;
    while (indent < raw.size() && raw[indent] == ' ') ++indent;
    if (indent < raw.size() && raw[indent] == '\t') fail(lineno, "tab indentation is not supported");
    if (indent % 2 != 0) fail(lineno, "indentation must be a multiple of 2 spaces");
    const std::size_t level = indent / 2;

    std::string body = trim(raw.substr(indent));
    const std::size_t id_end = body.find(' ');
    const std::string id = body.substr(0, id_end);
    if (!valid_id(id)) fail(lineno, "invalid id '" + id + "'");
    std::string rest = id_end == std::string::npos ? "" : trim(body.substr(id_end));

    std::string display_name = id;
    if (!rest.empty() && rest[0] == '"') {
      const std::size_t close = rest.find('"', 1);
      if (close == std::string::npos) fail(lineno, "unterminated display name on '" + id + "'");
      display_name = rest.substr(1, close - 1);
      rest = trim(rest.substr(close + 1));
    }

    std::optional<NodeId> explicit_parent;
    if (rest.rfind("->", 0) == 0) {
      const std::string p = trim(rest.substr(2));
      if (!valid_id(p)) fail(lineno, "invalid parent reference '" + p + "' on '" + id + "'");
      explicit_parent = p;
      rest.clear();
    }
    if (!rest.empty()) fail(lineno, "unexpected trailing text on '" + id + "': " + rest);

    if (*section == Group::special) {
      if (level != 0) fail(lineno, "special label '" + id + "' must not be nested");
      if (explicit_parent) fail(lineno, "special label '" + id + "' must not have a parent");
      rows.push_back(NodeRow{id, display_name, std::nullopt, Group::special, lineno});
      continue;
    }

    if (level > stack.size()) fail(lineno, "indentation jumps a level on '" + id + "'");
    stack.resize(level);
    std::optional<NodeId> parent = explicit_parent;
    if (!parent && level > 0) parent = stack[level - 1];
    rows.push_back(NodeRow{id, display_name, parent, *section, lineno});
    stack.push_back(id);
  }

  return Taxonomy::from_rows(std::move(rows));
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  try {
    return parse_taxonomy(read_file(path));
  } catch (const TaxonomyError& e) {
    throw TaxonomyError(path.string() + ": " + e.what());
  }
}

namespace {

void render_subtree(const Taxonomy& t, int index, const std::string& prefix, std::ostringstream& out) {
  const std::vector<int>& children = t.child_indices(index);
  for (std::size_t k = 0; k < children.size(); ++k) {
    const bool last = k + 1 == children.size();
    const TaxonomyNode& child = t.node(children[k]);
    out << prefix << (last ? "└── " : "├── ") << child.display_name << '\n';
    render_subtree(t, children[k], prefix + (last ? "    " : "│   "), out);
  }
}

}  // namespace

std::string render_tree(const Taxonomy& t) {
  std::ostringstream out;
  for (const Group g : {Group::findings, Group::diagnoses, Group::localizations}) {
    for (int i = 0; i < t.size(); ++i) {
      const TaxonomyNode& n = t.node(i);
      if (n.group != g || n.parent) continue;
      out << n.display_name << '\n';
      render_subtree(t, i, "", out);
    }
  }
  bool any_special = false;
  for (int i = 0; i < t.size(); ++i) {
    if (!t.node(i).is_special()) continue;
    out << (any_special ? ", " : "special: ") << t.node(i).display_name;
    any_special = true;
  }
  if (any_special) out << '\n';
  return out.str();
}

}  // namespace hierax
