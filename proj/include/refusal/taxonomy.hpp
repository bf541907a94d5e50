#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "refusal/io.hpp"

namespace refusal {

/// Sentinel id for the "not a refusal" class c0. Never a node id.
inline constexpr int kNotARefusal = -1;

struct CategoryNode {
  int id = 0;
  std::string name;
  std::string description;
  std::optional<int> parent_id;
  int depth = 0;
  // Marks a top-level refusal class (a member of the category universe).
  bool is_category = false;
};

/// Rooted refusal-category tree. Immutable once built; construction
/// validates every structural invariant.
///
/// Category (v1-level) nodes are the ones flagged `"category": true` in the
/// file. A file without any flag treats its leaves as the categories, which
/// is how the shipped 16-class taxonomy is laid out.
class TaxonomyTree {
 public:
  /// Throws StructureError on duplicate ids, zero or several roots, a root
  /// whose id is not 0, orphans, cycles, or a category nested in another.
  static TaxonomyTree from_nodes(std::vector<CategoryNode> nodes);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<CategoryNode>& nodes() const { return nodes_; }
  const CategoryNode& root() const { return nodes_.front(); }

  bool contains(int id) const { return index_.count(id) != 0; }
  const CategoryNode& node(int id) const;
  const std::vector<int>& children(int id) const;
  bool is_leaf(int id) const { return children(id).empty(); }

  /// Leaf ids, ascending.
  std::vector<int> leaves() const;
  /// Leaves in the subtree rooted at `id` (the node itself when it is a leaf).
  std::vector<int> leaves_under(int id) const;

  /// Category ids, ascending.
  const std::vector<int>& category_ids() const { return categories_; }
  bool is_category(int id) const;

  /// Nearest category at or above `id`; nullopt for structural nodes above
  /// the category level.
  std::optional<int> category_of(int id) const;

  /// Root-first node ids ending at `id`.
  std::vector<int> path_to(int id) const;

  /// Case-insensitive name lookup, ignoring surrounding whitespace.
  std::optional<int> find_by_name(std::string_view name) const;

 private:
  std::vector<CategoryNode> nodes_;  // ascending id, root first
  std::unordered_map<int, std::size_t> index_;
  std::unordered_map<int, std::vector<int>> children_;
  std::vector<int> categories_;
};

using CategoryPath = std::vector<int>;

struct CategoryUniverse {
  std::vector<int> ids;
  bool includes_not_a_refusal = false;

  std::size_t size() const { return ids.size(); }
  bool contains(int id) const;
  /// Position of `id`; throws UnknownCategory.
  std::size_t index_of(int id) const;
};

TaxonomyTree parse_taxonomy(const json& doc);
json taxonomy_to_json(const TaxonomyTree& tree);

TaxonomyTree load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const TaxonomyTree& tree, const std::filesystem::path& path);

/// One root-first path per leaf, in ascending leaf id order.
std::vector<CategoryPath> leaf_paths(const TaxonomyTree& tree);

CategoryUniverse category_universe(const TaxonomyTree& tree, bool include_c0);

/// Display name for a universe member, including the c0 sentinel.
std::string category_name(const TaxonomyTree& tree, int id);

}  // namespace refusal
