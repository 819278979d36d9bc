#pragma once

#include "treemed/error.hpp"

#include <cctype>
#include <cstddef>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace treemed {

struct TreeNode {
    int parent = -1;
    std::vector<int> children;  // empty for leaves
    std::string label;
    double branch_length = 0.0;  // parsed but unused by the method

    bool is_leaf() const { return children.empty(); }
};

// Rooted tree over named taxa. After binarize() every internal node has
// exactly two children and internal_order lists internal nodes in preorder,
// so a parent always precedes its children.
struct PhyloTree {
    std::vector<TreeNode> nodes;
    int root = -1;
    std::vector<int> internal_order;  // preorder over internal nodes

    std::size_t leaf_count() const {
        std::size_t n = 0;
        for (const auto& nd : nodes)
            if (nd.is_leaf()) ++n;
        return n;
    }

    std::vector<int> leaves_in_order() const {  // left-to-right
        std::vector<int> out;
        collect_leaves(root, out);
        return out;
    }

    std::vector<std::string> leaf_labels() const {
        std::vector<std::string> out;
        for (int v : leaves_in_order()) out.push_back(nodes[v].label);
        return out;
    }

private:
    void collect_leaves(int v, std::vector<int>& out) const {
        if (nodes[v].is_leaf()) {
            out.push_back(v);
            return;
        }
        for (int c : nodes[v].children) collect_leaves(c, out);
    }
};

namespace detail {

class NewickParser {
public:
    explicit NewickParser(const std::string& text) : text_(text) {}

    PhyloTree parse() {
        PhyloTree tree;
        skip_ws();
        tree.root = parse_clade(tree, -1);
        skip_ws();
        if (pos_ >= text_.size() || text_[pos_] != ';')
            fail("expected ';' terminating the tree");
        validate_leaves(tree);
        return tree;
    }

private:
    int parse_clade(PhyloTree& tree, int parent) {
        int idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[idx].parent = parent;
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == '(') {
            ++pos_;
            while (true) {
                int child = parse_clade(tree, idx);
                tree.nodes[idx].children.push_back(child);
                skip_ws();
                if (pos_ >= text_.size()) fail("unterminated '('");
                if (text_[pos_] == ',') {
                    ++pos_;
                    continue;
                }
                if (text_[pos_] == ')') {
                    ++pos_;
                    break;
                }
                fail("expected ',' or ')'");
            }
        }
        tree.nodes[idx].label = parse_label();
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == ':') {
            ++pos_;
            tree.nodes[idx].branch_length = parse_number();
        }
        if (tree.nodes[idx].is_leaf() && tree.nodes[idx].label.empty())
            fail("leaf without a label");
        return idx;
    }

    std::string parse_label() {
        static const std::string kReserved = "():,;";
        std::size_t start = pos_;
        while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_])) &&
               kReserved.find(text_[pos_]) == std::string::npos)
            ++pos_;
        return text_.substr(start, pos_ - start);
    }

    double parse_number() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) ||
                std::string("+-.eE").find(text_[pos_]) != std::string::npos))
            ++pos_;
        if (pos_ == start) fail("expected branch length after ':'");
        try {
            return std::stod(text_.substr(start, pos_ - start));
        } catch (const std::exception&) {
            fail("invalid branch length");
        }
        return 0.0;  // unreachable
    }

    void validate_leaves(const PhyloTree& tree) const {
        std::set<std::string> seen;
        for (const auto& nd : tree.nodes) {
            if (!nd.is_leaf()) continue;
            if (nd.label.empty())
                throw InputError("newick: empty leaf label");
            if (!seen.insert(nd.label).second)
                throw InputError("newick: duplicate leaf label '" + nd.label + "'");
        }
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw InputError("newick parse error at byte " + std::to_string(pos_) + ": " + what);
    }

    const std::string& text_;
    std::size_t pos_ = 0;
};

inline void preorder_internal(const PhyloTree& tree, int v, std::vector<int>& out) {
    if (tree.nodes[v].is_leaf()) return;
    out.push_back(v);
    for (int c : tree.nodes[v].children) preorder_internal(tree, c, out);
}

}  // namespace detail

inline PhyloTree parse_newick(const std::string& text) {
    return detail::NewickParser(text).parse();
}

// Resolve every k-ary node (k > 2) into a left-leaning ladder of binary
// nodes, preserving child order. Returns the number of resolved nodes via
// resolved_count when non-null.
inline PhyloTree binarize(const PhyloTree& tree, int* resolved_count = nullptr) {
    PhyloTree out;
    int resolved = 0;

    // rebuild recursively; returns new index
    std::function<int(int, int)> build = [&](int old_idx, int new_parent) -> int {
        const TreeNode& src = tree.nodes[old_idx];
        if (!src.is_leaf() && src.children.size() < 2)
            throw InputError("tree: internal node with fewer than 2 children");
        int idx = static_cast<int>(out.nodes.size());
        out.nodes.emplace_back();
        out.nodes[idx].parent = new_parent;
        out.nodes[idx].label = src.label;
        out.nodes[idx].branch_length = src.branch_length;
        if (src.is_leaf()) return idx;

        if (src.children.size() == 2) {
            for (int c : src.children) {
                int child = build(c, idx);  // may reallocate out.nodes
                out.nodes[idx].children.push_back(child);
            }
            return idx;
        }

        // ladder: ((c0,c1),c2,...) folded left
        ++resolved;
        int left = build(src.children[0], idx);
        for (std::size_t k = 1; k + 1 < src.children.size(); ++k) {
            int inner = static_cast<int>(out.nodes.size());
            out.nodes.emplace_back();
            out.nodes[inner].parent = idx;
            out.nodes[inner].children.push_back(left);
            out.nodes[left].parent = inner;
            int right = build(src.children[k], inner);
            out.nodes[inner].children.push_back(right);
            left = inner;
        }
        out.nodes[idx].children.push_back(left);
        out.nodes[left].parent = idx;
        int last = build(src.children.back(), idx);
        out.nodes[idx].children.push_back(last);
        return idx;
    };

    out.root = build(tree.root, -1);
    out.internal_order.clear();
    detail::preorder_internal(out, out.root, out.internal_order);
    if (resolved_count) *resolved_count = resolved;
    return out;
}

inline std::vector<int> order_internal_nodes(const PhyloTree& tree) {
    std::vector<int> out;
    detail::preorder_internal(tree, tree.root, out);
    return out;
}

// Serialize topology (no branch lengths); internal labels taken from a
// callback keyed by node index, leaves keep their taxon names.
inline std::string write_newick(const PhyloTree& tree,
                                const std::function<std::string(int)>& internal_label) {
    std::string out;
    std::function<void(int)> emit = [&](int v) {
        const TreeNode& nd = tree.nodes[v];
        if (nd.is_leaf()) {
            out += nd.label;
            return;
        }
        out += '(';
        for (std::size_t i = 0; i < nd.children.size(); ++i) {
            if (i) out += ',';
            emit(nd.children[i]);
        }
        out += ')';
        out += internal_label(v);
    };
    emit(tree.root);
    out += ';';
    return out;
}

}  // namespace treemed
