#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace taxreg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// One node of the label taxonomy. Levels are numbered root-down:
/// root = 0, top-level concepts = 1, leaves = depth().
struct TaxNode {
    int id = -1;
    std::string name;
    int level = -1;
    int parent = -1;  // -1 only for the root
    std::vector<int> children;

    bool is_leaf() const { return children.empty(); }
};

/// Rooted tree of labeled nodes with uniform leaf depth. Leaves are the
/// classifier's classes, indexed 0..num_classes()-1 in depth-first
/// left-to-right order. Immutable after construction.
class Taxonomy {
public:
    /// Parses either the indented text format (2 spaces per level, one
    /// node per line) or the JSON form {"name":..., "children":[...]}.
    static Taxonomy parse(const std::string& text);

    /// Builds from an explicit parent list; used by parse and by tests
    /// that construct trees directly. Validates all invariants.
    static Taxonomy from_edges(const std::vector<std::pair<std::string, int>>& name_and_parent);

    const std::vector<TaxNode>& nodes() const { return nodes_; }
    const TaxNode& node(int id) const {
        if (id < 0 || id >= static_cast<int>(nodes_.size()))
            throw Error("unknown node id " + std::to_string(id));
        return nodes_[id];
    }

    int root() const { return root_; }
    int depth() const { return depth_; }
    int num_classes() const { return static_cast<int>(leaf_order_.size()); }
    const std::vector<int>& leaf_order() const { return leaf_order_; }

    /// Node id for a name, or -1.
    int find(const std::string& name) const {
        auto it = by_name_.find(name);
        return it == by_name_.end() ? -1 : it->second;
    }

    /// Class index of a leaf node id.
    int class_index(int leaf_id) const {
        const TaxNode& n = node(leaf_id);
        if (!n.is_leaf()) throw Error("node '" + n.name + "' is not a leaf");
        return class_of_[leaf_id];
    }
    int leaf_id(int class_index) const {
        if (class_index < 0 || class_index >= num_classes())
            throw Error("class index out of range: " + std::to_string(class_index));
        return leaf_order_[class_index];
    }

    /// Class indices of all leaf descendants, ascending (DFS order makes
    /// them contiguous). For a leaf, the singleton containing itself.
    std::vector<int> leaves_under(int node_id) const {
        auto [b, e] = leaf_range(node_id);
        std::vector<int> out(static_cast<size_t>(e - b));
        for (int i = b; i < e; ++i) out[static_cast<size_t>(i - b)] = i;
        return out;
    }

    /// Half-open class-index range [begin, end) covered by a node.
    std::pair<int, int> leaf_range(int node_id) const {
        node(node_id);
        return {leaf_begin_[node_id], leaf_end_[node_id]};
    }

    /// Ancestors of a leaf at levels 1..depth()-1, ordered top-down.
    std::vector<int> ancestor_chain(int class_index) const {
        int id = leaf_id(class_index);
        std::vector<int> chain;
        for (int cur = nodes_[id].parent; cur != -1 && nodes_[cur].level >= 1; cur = nodes_[cur].parent)
            chain.push_back(cur);
        std::reverse(chain.begin(), chain.end());
        return chain;
    }

    /// The unique ancestor-or-self of a leaf at a given level (0 = root).
    int ancestor_at_level(int class_index, int level) const {
        if (level < 0 || level > depth_)
            throw Error("level out of range: " + std::to_string(level));
        int cur = leaf_id(class_index);
        while (nodes_[cur].level > level) cur = nodes_[cur].parent;
        return cur;
    }

    /// All nodes at a level, in depth-first order.
    const std::vector<int>& level_nodes(int level) const {
        if (level < 0 || level > depth_)
            throw Error("level out of range: " + std::to_string(level));
        return levels_[static_cast<size_t>(level)];
    }

    /// Canonical indented text form; parse(serialize()) reproduces the
    /// same taxonomy.
    std::string serialize() const {
        std::ostringstream os;
        serialize_rec(os, root_, 0);
        return os.str();
    }

    /// FNV-1a 64-bit hash of the canonical form, as hex. Stored in model
    /// artifacts so a model cannot be evaluated against the wrong tree.
    std::string hash() const {
        std::string s = serialize();
        uint64_t h = 0xcbf29ce484222325ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

private:
    std::vector<TaxNode> nodes_;
    std::vector<int> leaf_order_;
    std::vector<std::vector<int>> levels_;
    std::map<std::string, int> by_name_;
    std::vector<int> leaf_begin_, leaf_end_, class_of_;
    int root_ = -1;
    int depth_ = 0;

    void serialize_rec(std::ostringstream& os, int id, int indent) const {
        for (int i = 0; i < indent; ++i) os << "  ";
        os << nodes_[id].name << "\n";
        for (int c : nodes_[id].children) serialize_rec(os, c, indent + 1);
    }

    void finalize();
    static Taxonomy parse_indent(const std::string& text);
    static Taxonomy parse_json(const std::string& text);
};

inline Taxonomy Taxonomy::from_edges(const std::vector<std::pair<std::string, int>>& spec) {
    Taxonomy t;
    t.nodes_.reserve(spec.size());
    for (size_t i = 0; i < spec.size(); ++i) {
        TaxNode n;
        n.id = static_cast<int>(i);
        n.name = spec[i].first;
        n.parent = spec[i].second;
        t.nodes_.push_back(std::move(n));
    }
    for (auto& n : t.nodes_) {
        if (n.parent == -1) continue;
        if (n.parent < 0 || n.parent >= static_cast<int>(t.nodes_.size()))
            throw Error("node '" + n.name + "' references unknown parent");
        t.nodes_[static_cast<size_t>(n.parent)].children.push_back(n.id);
    }
    t.finalize();
    return t;
}

inline void Taxonomy::finalize() {
    if (nodes_.empty()) throw Error("empty taxonomy");

    root_ = -1;
    for (const auto& n : nodes_) {
        if (n.parent == -1) {
            if (root_ != -1) throw Error("multiple roots: '" + nodes_[static_cast<size_t>(root_)].name + "' and '" + n.name + "'");
            root_ = n.id;
        }
        if (!by_name_.emplace(n.name, n.id).second)
            throw Error("duplicate name '" + n.name + "'");
    }
    if (root_ == -1) throw Error("no root (cycle through every node)");

    // Levels by BFS from the root; any node not reached sits on a cycle.
    std::vector<int> order;
    order.push_back(root_);
    nodes_[static_cast<size_t>(root_)].level = 0;
    for (size_t i = 0; i < order.size(); ++i) {
        for (int c : nodes_[static_cast<size_t>(order[i])].children) {
            nodes_[static_cast<size_t>(c)].level = nodes_[static_cast<size_t>(order[i])].level + 1;
            order.push_back(c);
        }
    }
    if (order.size() != nodes_.size()) throw Error("cycle detected in taxonomy");

    depth_ = 0;
    for (const auto& n : nodes_) depth_ = std::max(depth_, n.level);

    for (const auto& n : nodes_)
        if (n.is_leaf() && n.level != depth_)
            throw Error("non-uniform leaf depth: leaf '" + n.name + "' at level " + std::to_string(n.level) + ", expected " + std::to_string(depth_));
    if (depth_ < 1) throw Error("taxonomy must have at least one leaf below the root");
    if (depth_ > 4) throw Error("taxonomy depth " + std::to_string(depth_) + " exceeds the supported maximum of 4");

    levels_.assign(static_cast<size_t>(depth_) + 1, {});
    leaf_begin_.assign(nodes_.size(), 0);
    leaf_end_.assign(nodes_.size(), 0);
    class_of_.assign(nodes_.size(), -1);

    // Depth-first left-to-right pass fixes leaf_order, per-level node
    // order, and the contiguous leaf range of every internal node.
    std::vector<std::pair<int, bool>> stack{{root_, false}};
    while (!stack.empty()) {
        auto [id, done] = stack.back();
        stack.pop_back();
        TaxNode& n = nodes_[static_cast<size_t>(id)];
        if (done) {
            leaf_end_[static_cast<size_t>(id)] = static_cast<int>(leaf_order_.size());
            continue;
        }
        levels_[static_cast<size_t>(n.level)].push_back(id);
        leaf_begin_[static_cast<size_t>(id)] = static_cast<int>(leaf_order_.size());
        if (n.is_leaf()) {
            class_of_[static_cast<size_t>(id)] = static_cast<int>(leaf_order_.size());
            leaf_order_.push_back(id);
            leaf_end_[static_cast<size_t>(id)] = static_cast<int>(leaf_order_.size());
            continue;
        }
        stack.emplace_back(id, true);
        for (auto it = n.children.rbegin(); it != n.children.rend(); ++it)
            stack.emplace_back(*it, false);
    }
}

inline Taxonomy Taxonomy::parse_indent(const std::string& text) {
    std::vector<std::pair<std::string, int>> spec;
    std::vector<int> path;  // node id at each open indent depth
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        size_t ws = line.find_first_not_of(' ');
        if (ws == std::string::npos) continue;  // blank
        if (line[ws] == '#') continue;
        if (line.find('\t') != std::string::npos)
            throw Error("line " + std::to_string(lineno) + ": tabs are not allowed, indent with 2 spaces");
        if (ws % 2 != 0)
            throw Error("line " + std::to_string(lineno) + ": odd indent of " + std::to_string(ws) + " spaces");
        int d = static_cast<int>(ws / 2);
        std::string name = line.substr(ws);
        while (!name.empty() && name.back() == ' ') name.pop_back();
        if (d > static_cast<int>(path.size()))
            throw Error("line " + std::to_string(lineno) + ": indent jumps by more than one level");
        if (d == 0 && !spec.empty())
            throw Error("line " + std::to_string(lineno) + ": multiple roots ('" + name + "')");
        int parent = d == 0 ? -1 : path[static_cast<size_t>(d) - 1];
        int id = static_cast<int>(spec.size());
        spec.emplace_back(name, parent);
        path.resize(static_cast<size_t>(d));
        path.push_back(id);
    }
    if (spec.empty()) throw Error("empty taxonomy file");
    return from_edges(spec);
}

inline Taxonomy Taxonomy::parse_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("taxonomy JSON: ") + e.what());
    }
    std::vector<std::pair<std::string, int>> spec;
    // Iterative DFS keeps child order identical to the document order.
    struct Item { const nlohmann::json* obj; int parent; };
    std::vector<Item> stack{{&j, -1}};
    while (!stack.empty()) {
        auto [obj, parent] = stack.back();
        stack.pop_back();
        if (!obj->is_object() || !obj->contains("name") || !(*obj)["name"].is_string())
            throw Error("taxonomy JSON: every node needs a string \"name\"");
        int id = static_cast<int>(spec.size());
        spec.emplace_back((*obj)["name"].get<std::string>(), parent);
        if (obj->contains("children")) {
            const auto& kids = (*obj)["children"];
            if (!kids.is_array()) throw Error("taxonomy JSON: \"children\" must be an array");
            for (auto it = kids.rbegin(); it != kids.rend(); ++it)
                stack.push_back({&*it, id});
        }
    }
    return from_edges(spec);
}

inline Taxonomy Taxonomy::parse(const std::string& text) {
    size_t first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) throw Error("empty taxonomy file");
    if (text[first] == '{') return parse_json(text);
    return parse_indent(text);
}

}  // namespace taxreg
