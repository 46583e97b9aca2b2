#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "htnn/dim_tree.hpp"
#include "htnn/errors.hpp"
#include "htnn/ht_lstm.hpp"

namespace htnn {

// Model file layout: a line-oriented text header ending with "end\n",
// followed by the payload, every tensor in header order as little-endian
// IEEE-754 binary64. The header declares the payload's byte offset and length.

inline constexpr int model_format_version = 1;

struct LayerSpec {
    std::string name;
    DimTree tree;
};

struct TensorSpec {
    std::string name;
    Shape shape;
};

struct ModelHeader {
    int version = model_format_version;
    Shape in_shape;
    Shape out_shape;
    std::size_t hidden = 0;
    std::size_t classes = 0;
    bool concatenated = false;
    std::vector<LayerSpec> layers;
    std::vector<TensorSpec> tensors;
    std::size_t payload_offset = 0;
    std::size_t payload_bytes = 0;

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& t : tensors) n += num_elements(t.shape);
        return n;
    }
};

namespace detail {

inline void encode_tree(const DimTree& tree, std::size_t id, std::string& out) {
    out += tree.label(id);
    const auto& n = tree.node(id);
    if (!n.is_leaf()) {
        out += "(";
        encode_tree(tree, *n.left, out);
        out += ",";
        encode_tree(tree, *n.right, out);
        out += ")";
    }
}

/// Parses "[a,b](left,right)" / "[a,a]" into pre-order nodes.
class TreeParser {
public:
    explicit TreeParser(const std::string& text) : s_(text) {}

    std::vector<TreeNode> parse() {
        node(std::nullopt);
        if (pos_ != s_.size()) fail("trailing characters");
        return nodes_;
    }

private:
    std::size_t node(std::optional<std::size_t> parent) {
        expect('[');
        const std::size_t a = number();
        expect(',');
        const std::size_t b = number();
        expect(']');
        if (a < 1 || b < a) fail("bad interval [" + std::to_string(a) + "," + std::to_string(b) + "]");
        const std::size_t id = nodes_.size();
        TreeNode n;
        for (std::size_t m = a - 1; m < b; ++m) n.modes.push_back(m);
        n.parent = parent;
        nodes_.push_back(std::move(n));
        if (pos_ < s_.size() && s_[pos_] == '(') {
            ++pos_;
            const std::size_t l = node(id);
            nodes_[id].left = l;
            expect(',');
            const std::size_t r = node(id);
            nodes_[id].right = r;
            expect(')');
        }
        return id;
    }

    std::size_t number() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && s_[pos_] >= '0' && s_[pos_] <= '9') ++pos_;
        if (start == pos_) fail("expected a number");
        return std::stoul(s_.substr(start, pos_ - start));
    }

    void expect(char c) {
        if (pos_ >= s_.size() || s_[pos_] != c) fail(std::string("expected '") + c + "'");
        ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError("tree \"" + s_ + "\": " + what + " at offset " + std::to_string(pos_));
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    std::vector<TreeNode> nodes_;
};

inline std::string join(std::span<const std::size_t> v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += std::to_string(v[i]);
    }
    return out;
}

inline std::vector<std::size_t> read_sizes(std::istringstream& in) {
    std::vector<std::size_t> out;
    std::string tok;
    while (in >> tok) {
        if (tok.find_first_not_of("0123456789") != std::string::npos) {
            throw ParseError("expected an unsigned integer, got \"" + tok + "\"");
        }
        out.push_back(std::stoul(tok));
    }
    return out;
}

inline std::string pad_offset(std::size_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%012zu", v);
    return buf;
}

} // namespace detail

inline std::string emit_header(const ModelHeader& h) {
    std::string out;
    out += "htnn-model\n";
    out += "version " + std::to_string(h.version) + "\n";
    out += "scalar f64\n";
    out += "endian little\n";
    out += "d " + std::to_string(h.in_shape.size()) + "\n";
    out += "in_shape " + detail::join(h.in_shape) + "\n";
    out += "out_shape " + detail::join(h.out_shape) + "\n";
    out += "hidden " + std::to_string(h.hidden) + "\n";
    out += "classes " + std::to_string(h.classes) + "\n";
    out += std::string("gates ") + (h.concatenated ? "concatenated" : "separate") + "\n";
    for (const auto& l : h.layers) {
        std::string tree;
        detail::encode_tree(l.tree, l.tree.root(), tree);
        std::vector<std::size_t> ranks;
        for (std::size_t id = 0; id < l.tree.num_nodes(); ++id) ranks.push_back(l.tree.node(id).rank);
        out += "layer " + l.name + " " + tree + " ranks " + detail::join(ranks) + "\n";
    }
    for (const auto& t : h.tensors) {
        out += "tensor " + t.name + (t.shape.empty() ? "" : " ") + detail::join(t.shape) + "\n";
    }
    out += "payload_offset " + detail::pad_offset(h.payload_offset) + "\n";
    out += "payload_bytes " + std::to_string(h.payload_bytes) + "\n";
    out += "end\n";
    return out;
}

inline ModelHeader parse_header(const std::string& text) {
    std::istringstream lines(text);
    std::string line;
    ModelHeader h;
    auto next = [&](const std::string& key) {
        if (!std::getline(lines, line)) throw ParseError("header ends before \"" + key + "\"");
        std::istringstream in(line);
        std::string k;
        in >> k;
        if (k != key) throw ParseError("expected \"" + key + "\", found \"" + line + "\"");
        std::string rest;
        std::getline(in >> std::ws, rest);
        return rest;
    };
    auto single = [](const std::string& v, const std::string& key) {
        std::istringstream in(v);
        auto vals = detail::read_sizes(in);
        if (vals.size() != 1) throw ParseError("\"" + key + "\" needs one value");
        return vals[0];
    };
    if (!std::getline(lines, line) || line != "htnn-model") throw ParseError("not an htnn model file");
    const std::string version = next("version");
    if (version != std::to_string(model_format_version)) {
        throw ParseError("unsupported model version " + version);
    }
    if (next("scalar") != "f64") throw ParseError("unsupported scalar width");
    if (next("endian") != "little") throw ParseError("unsupported endianness");
    const std::size_t d = single(next("d"), "d");
    {
        std::istringstream in(next("in_shape"));
        h.in_shape = detail::read_sizes(in);
    }
    {
        std::istringstream in(next("out_shape"));
        h.out_shape = detail::read_sizes(in);
    }
    if (h.in_shape.size() != d || h.out_shape.size() != d) throw ParseError("shapes do not have d entries");
    h.hidden = single(next("hidden"), "hidden");
    h.classes = single(next("classes"), "classes");
    const std::string gates = next("gates");
    if (gates != "separate" && gates != "concatenated") throw ParseError("unknown gate layout \"" + gates + "\"");
    h.concatenated = gates == "concatenated";
    while (std::getline(lines, line)) {
        std::istringstream in(line);
        std::string key;
        in >> key;
        if (key == "layer") {
            LayerSpec l;
            std::string tree_text, ranks_kw;
            in >> l.name >> tree_text >> ranks_kw;
            if (ranks_kw != "ranks") throw ParseError("layer line needs \"ranks\": " + line);
            auto nodes = detail::TreeParser(tree_text).parse();
            const auto ranks = detail::read_sizes(in);
            if (ranks.size() != nodes.size()) {
                throw StructureError("layer " + l.name + " lists " + std::to_string(ranks.size()) +
                                     " ranks for " + std::to_string(nodes.size()) + " nodes");
            }
            for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i].rank = ranks[i];
            l.tree = DimTree(d, std::move(nodes));
            require_valid(l.tree);
            h.layers.push_back(std::move(l));
        } else if (key == "tensor") {
            TensorSpec t;
            in >> t.name;
            t.shape = detail::read_sizes(in);
            h.tensors.push_back(std::move(t));
        } else if (key == "payload_offset") {
            const std::string v = line.substr(key.size() + 1);
            std::istringstream vin(v);
            const auto vals = detail::read_sizes(vin);
            if (vals.size() != 1) throw ParseError("bad payload_offset");
            h.payload_offset = vals[0];
            h.payload_bytes = single(next("payload_bytes"), "payload_bytes");
            if (!std::getline(lines, line) || line != "end") throw ParseError("header must close with \"end\"");
            return h;
        } else {
            throw ParseError("unexpected header line \"" + line + "\"");
        }
    }
    throw ParseError("header ends before \"payload_offset\"");
}

inline ModelHeader header_for(const LSTMParams& p) {
    ModelHeader h;
    const auto& layer0 = p.gates.front();
    h.in_shape = layer0.in_shape();
    h.out_shape = layer0.out_shape();
    if (p.concatenated()) h.out_shape[0] /= 4;
    h.hidden = p.hidden_size();
    h.classes = p.classes();
    h.concatenated = p.concatenated();
    const auto names = p.tensor_names();
    for (std::size_t l = 0; l < p.gates.size(); ++l) {
        const std::string& first = names[l * p.gates[0].tree().num_nodes()];
        h.layers.push_back({first.substr(0, first.find('.')), p.gates[l].tree()});
    }
    const auto tensors = p.tensors();
    for (std::size_t i = 0; i < tensors.size(); ++i) h.tensors.push_back({names[i], tensors[i]->shape()});
    h.payload_bytes = 8 * h.scalar_count();
    h.payload_offset = emit_header(h).size();
    return h;
}

/// Zero-filled parameters with the structure the header describes.
inline LSTMParams skeleton_from(const ModelHeader& h) {
    const std::size_t want_layers = h.concatenated ? 1 : 4;
    if (h.layers.size() != want_layers) {
        throw StructureError("model lists " + std::to_string(h.layers.size()) + " gate layers, expected " +
                             std::to_string(want_layers));
    }
    if (num_elements(h.out_shape) != h.hidden) throw StructureError("out_shape does not multiply to hidden");
    LSTMParams p;
    Shape out = h.out_shape;
    if (h.concatenated) out[0] *= 4;
    for (const auto& l : h.layers) {
        const Shape fused = HTLinearLayer::fused_shape(h.in_shape, out);
        std::vector<Tensor> comps;
        for (std::size_t id = 0; id < l.tree.num_nodes(); ++id) comps.emplace_back(component_shape(l.tree, fused, id));
        p.gates.emplace_back(HTTensor(l.tree, fused, std::move(comps)), h.in_shape, out);
    }
    for (int g = 0; g < 4; ++g) {
        p.V[g] = Tensor(Shape{h.hidden, h.hidden});
        p.b[g] = Tensor(Shape{h.hidden});
    }
    p.head_w = Tensor(Shape{h.classes, h.hidden});
    p.head_b = Tensor(Shape{h.classes});
    return p;
}

inline std::string serialize_model(const LSTMParams& p) {
    const ModelHeader h = header_for(p);
    std::string out = emit_header(h);
    out.reserve(out.size() + h.payload_bytes);
    for (const Tensor* t : p.tensors()) {
        for (double v : t->data()) {
            const auto bits = std::bit_cast<std::uint64_t>(v);
            for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
        }
    }
    return out;
}

inline LSTMParams deserialize_model(const std::string& bytes) {
    const std::size_t end = bytes.find("\nend\n");
    if (end == std::string::npos) throw ParseError("model header is not terminated");
    const std::size_t header_len = end + 5;
    const ModelHeader h = parse_header(bytes.substr(0, header_len));
    LSTMParams p = skeleton_from(h);
    const auto names = p.tensor_names();
    const auto tensors = p.tensors();
    if (h.tensors.size() != tensors.size()) {
        throw StructureError("component list has " + std::to_string(h.tensors.size()) + " entries, structure needs " +
                             std::to_string(tensors.size()));
    }
    for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (h.tensors[i].name != names[i] || h.tensors[i].shape != tensors[i]->shape()) {
            throw StructureError("component " + std::to_string(i) + " is \"" + h.tensors[i].name + "\" " +
                                 shape_string(h.tensors[i].shape) + ", structure needs \"" + names[i] + "\" " +
                                 shape_string(tensors[i]->shape()));
        }
    }
    if (h.payload_offset != header_len) {
        throw ParseError("declared payload offset " + std::to_string(h.payload_offset) + " but header is " +
                         std::to_string(header_len) + " bytes");
    }
    const std::size_t actual = bytes.size() - header_len;
    if (h.payload_bytes != 8 * h.scalar_count() || actual != h.payload_bytes) {
        throw ParseError("payload length mismatch: header declares " + std::to_string(h.payload_bytes) +
                         " bytes, components need " + std::to_string(8 * h.scalar_count()) + ", file has " +
                         std::to_string(actual));
    }
    std::size_t pos = header_len;
    for (Tensor* t : tensors) {
        for (double& v : t->data()) {
            std::uint64_t bits = 0;
            for (int i = 0; i < 8; ++i) bits |= std::uint64_t(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
            v = std::bit_cast<double>(bits);
            pos += 8;
        }
    }
    return p;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + path);
}

inline void save_model(const std::string& path, const LSTMParams& p) { write_file(path, serialize_model(p)); }

inline LSTMParams load_model(const std::string& path) { return deserialize_model(read_file(path)); }

} // namespace htnn
