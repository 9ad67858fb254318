#ifndef CPA_ARBORESCENCE_H_
#define CPA_ARBORESCENCE_H_

#include <vector>

#include <Eigen/Core>

namespace cpa {

// Chu-Liu/Edmonds minimum spanning arborescence on a dense directed graph.
// cost(j, i) is the weight of edge j -> i; infinite weights mark missing
// edges. Returns parent[v] for every node (parent[root] == -1). Throws
// Error when no spanning arborescence exists.
std::vector<int> MinArborescence(const Eigen::MatrixXd& cost, int root);

}  // namespace cpa

#endif  // CPA_ARBORESCENCE_H_
