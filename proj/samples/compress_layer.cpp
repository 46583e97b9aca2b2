// Builds one HT layer, checks it against its dense matrix and prints the
// storage and flop savings.

#include <cstdio>

#include "htnn/complexity.hpp"
#include "htnn/ht_layer.hpp"

int main() {
    using namespace htnn;
    const Shape in{8, 8, 8, 8}, out{4, 4, 4, 4}; // 4096 inputs, 256 outputs
    const DimTree tree = assign_ranks(DimTree::balanced(in.size()), 3, 3);
    const HTLinearLayer layer = HTLinearLayer::random(tree, in, out, 7);

    Rng rng(1);
    Tensor x(Shape{layer.in_size()});
    for (double& v : x.storage()) v = rng.normal();

    const Tensor y = forward(layer, x);
    const Tensor w = as_matrix(layer);
    const Tensor want = matvec(w, x.data());
    for (std::size_t id = 0; id < tree.num_nodes(); ++id) {
        std::printf("%s%s rank %zu\n", tree.is_leaf(id) ? "  leaf " : "  node ", tree.label(id).c_str(),
                    tree.node(id).rank);
    }
    std::printf("max |HT - dense| relative error: %.3e\n", relative_error(y.data(), want.data()));

    std::size_t params = 0;
    for (const auto& c : layer.core().components()) params += c.size();
    std::printf("parameters: HT %zu, dense %zu\n", params, w.size());
    std::printf("forward flops: HT %zu, dense %zu\n", flop_count_forward(layer), 2 * w.size());
    return 0;
}
