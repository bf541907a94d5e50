#include "refusal/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "refusal/errors.hpp"

namespace refusal {

namespace {

std::string normalize_name(std::string_view s) {
  auto begin = s.find_first_not_of(" \t\r\n\"'`*");
  if (begin == std::string_view::npos) return {};
  auto end = s.find_last_not_of(" \t\r\n\"'`*.");
  std::string out(s.substr(begin, end - begin + 1));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

TaxonomyTree TaxonomyTree::from_nodes(std::vector<CategoryNode> nodes) {
  if (nodes.empty()) fail(ErrorKind::Structure, "taxonomy has no nodes");
  std::sort(nodes.begin(), nodes.end(),
            [](const CategoryNode& a, const CategoryNode& b) { return a.id < b.id; });

  TaxonomyTree tree;
  std::optional<int> root_id;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& n = nodes[i];
    if (!tree.index_.emplace(n.id, i).second) {
      fail(ErrorKind::Structure, "duplicate node id " + std::to_string(n.id));
    }
    if (!n.parent_id) {
      if (root_id) fail(ErrorKind::Structure, "multiple roots (" + std::to_string(*root_id) + ", " + std::to_string(n.id) + ")");
      root_id = n.id;
    }
  }
  if (!root_id) fail(ErrorKind::Structure, "no root node (every node has a parent)");
  if (*root_id != 0) fail(ErrorKind::Structure, "root must have id 0, found " + std::to_string(*root_id));

  for (const auto& n : nodes) {
    tree.children_[n.id];
    if (!n.parent_id) continue;
    if (*n.parent_id == n.id) fail(ErrorKind::Structure, "node " + std::to_string(n.id) + " is its own parent");
    if (!tree.index_.count(*n.parent_id)) {
      fail(ErrorKind::Structure, "orphan node " + std::to_string(n.id) + ": parent " + std::to_string(*n.parent_id) + " does not exist");
    }
    tree.children_[*n.parent_id].push_back(n.id);
  }
  for (auto& [id, kids] : tree.children_) std::sort(kids.begin(), kids.end());

  // Breadth-first from the root assigns depths; anything unvisited sits on a cycle.
  std::vector<bool> seen(nodes.size(), false);
  std::vector<int> queue{0};
  seen[tree.index_.at(0)] = true;
  nodes[tree.index_.at(0)].depth = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const int id = queue[head];
    const int depth = nodes[tree.index_.at(id)].depth;
    for (int child : tree.children_.at(id)) {
      auto ci = tree.index_.at(child);
      seen[ci] = true;
      nodes[ci].depth = depth + 1;
      queue.push_back(child);
    }
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!seen[i]) fail(ErrorKind::Structure, "node " + std::to_string(nodes[i].id) + " is not reachable from the root (cycle)");
  }

  tree.nodes_ = std::move(nodes);

  const bool flagged = std::any_of(tree.nodes_.begin(), tree.nodes_.end(),
                                   [](const CategoryNode& n) { return n.is_category; });
  if (!flagged) {
    for (auto& n : tree.nodes_) n.is_category = tree.children_.at(n.id).empty();
  }
  for (const auto& n : tree.nodes_) {
    if (!n.is_category) continue;
    for (auto p = n.parent_id; p; p = tree.node(*p).parent_id) {
      if (tree.node(*p).is_category) {
        fail(ErrorKind::Structure, "category " + std::to_string(n.id) + " is nested under category " + std::to_string(*p));
      }
    }
    tree.categories_.push_back(n.id);
  }
  return tree;
}

const CategoryNode& TaxonomyTree::node(int id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorKind::UnknownCategory, "no node with id " + std::to_string(id));
  return nodes_[it->second];
}

const std::vector<int>& TaxonomyTree::children(int id) const {
  auto it = children_.find(id);
  if (it == children_.end()) fail(ErrorKind::UnknownCategory, "no node with id " + std::to_string(id));
  return it->second;
}

std::vector<int> TaxonomyTree::leaves() const { return leaves_under(root().id); }

std::vector<int> TaxonomyTree::leaves_under(int id) const {
  std::vector<int> out;
  std::vector<int> stack{id};
  while (!stack.empty()) {
    const int cur = stack.back();
    stack.pop_back();
    const auto& kids = children(cur);
    if (kids.empty()) out.push_back(cur);
    stack.insert(stack.end(), kids.begin(), kids.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool TaxonomyTree::is_category(int id) const {
  return contains(id) && node(id).is_category;
}

std::optional<int> TaxonomyTree::category_of(int id) const {
  for (std::optional<int> cur = id; cur; cur = node(*cur).parent_id) {
    if (node(*cur).is_category) return cur;
  }
  return std::nullopt;
}

std::vector<int> TaxonomyTree::path_to(int id) const {
  std::vector<int> path;
  for (std::optional<int> cur = id; cur; cur = node(*cur).parent_id) path.push_back(*cur);
  std::reverse(path.begin(), path.end());
  return path;
}

std::optional<int> TaxonomyTree::find_by_name(std::string_view name) const {
  const std::string wanted = normalize_name(name);
  for (const auto& n : nodes_) {
    if (normalize_name(n.name) == wanted) return n.id;
  }
  return std::nullopt;
}

bool CategoryUniverse::contains(int id) const {
  return std::find(ids.begin(), ids.end(), id) != ids.end();
}

std::size_t CategoryUniverse::index_of(int id) const {
  auto it = std::find(ids.begin(), ids.end(), id);
  if (it == ids.end()) fail(ErrorKind::UnknownCategory, "category " + std::to_string(id) + " is not in the universe");
  return static_cast<std::size_t>(it - ids.begin());
}

TaxonomyTree parse_taxonomy(const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc["nodes"].is_array()) {
    fail(ErrorKind::Parse, "taxonomy must be an object with a \"nodes\" array");
  }
  std::vector<CategoryNode> nodes;
  for (const auto& item : doc["nodes"]) {
    try {
      CategoryNode n;
      n.id = item.at("id").get<int>();
      n.name = item.at("name").get<std::string>();
      n.description = item.value("description", std::string{});
      if (item.contains("parent_id") && !item["parent_id"].is_null()) {
        n.parent_id = item["parent_id"].get<int>();
      }
      n.is_category = item.value("category", false);
      nodes.push_back(std::move(n));
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, std::string("bad taxonomy node: ") + e.what());
    }
  }
  return TaxonomyTree::from_nodes(std::move(nodes));
}

json taxonomy_to_json(const TaxonomyTree& tree) {
  // Flags are written only when they differ from the leaf default.
  bool explicit_flags = false;
  for (const auto& n : tree.nodes()) {
    if (n.is_category != tree.is_leaf(n.id)) explicit_flags = true;
  }
  json nodes = json::array();
  for (const auto& n : tree.nodes()) {
    json j{{"id", n.id}, {"name", n.name}, {"description", n.description}};
    j["parent_id"] = n.parent_id ? json(*n.parent_id) : json(nullptr);
    if (explicit_flags && n.is_category) j["category"] = true;
    nodes.push_back(std::move(j));
  }
  return json{{"nodes", std::move(nodes)}};
}

TaxonomyTree load_taxonomy(const std::filesystem::path& path) {
  return parse_taxonomy(read_json_file(path));
}

void save_taxonomy(const TaxonomyTree& tree, const std::filesystem::path& path) {
  write_text_file(path, taxonomy_to_json(tree).dump(2) + "\n");
}

std::vector<CategoryPath> leaf_paths(const TaxonomyTree& tree) {
  std::vector<CategoryPath> paths;
  for (int leaf : tree.leaves()) paths.push_back(tree.path_to(leaf));
  return paths;
}

CategoryUniverse category_universe(const TaxonomyTree& tree, bool include_c0) {
  CategoryUniverse u;
  u.includes_not_a_refusal = include_c0;
  if (include_c0) u.ids.push_back(kNotARefusal);
  u.ids.insert(u.ids.end(), tree.category_ids().begin(), tree.category_ids().end());
  return u;
}

std::string category_name(const TaxonomyTree& tree, int id) {
  if (id == kNotARefusal) return "Not a refusal";
  return tree.node(id).name;
}

}  // namespace refusal
