#pragma once

#include "unimatch/mesh.hpp"
#include "unimatch/types.hpp"

#include <vector>

namespace unimatch {

/// Average-linkage agglomerative clustering of the rows of `features` where
/// only clusters joined by a mesh edge may merge. Distances are Euclidean;
/// the linkage between merged clusters follows the sparse Lance-Williams
/// average update. Stops at k clusters; labels are ordered by each
/// cluster's smallest vertex. Throws KTooLarge when k exceeds the vertex
/// count or the connectivity cannot reach k clusters.
std::vector<int> connected_average_linkage(
    const Mat& features, const std::vector<std::vector<int>>& adjacency, int k);

/// Mean feature per label.
Mat label_centroids(const Mat& features, const std::vector<int>& labels, int k);

struct KMeansOptions
{
    double tolerance = 1e-6;
    int max_iterations = 100;
};

/// Lloyd iterations from the given centroids. Ties go to the lower cluster;
/// an empty cluster is reseeded with the point farthest from its centroid.
std::vector<int> kmeans(const Mat& features, Mat centroids, const KMeansOptions& options = {});

struct CosegResult
{
    std::vector<int> anchor;
    std::vector<int> target;
};

CosegResult cosegment(const Mat& f_anchor, const TriangleMesh& anchor_mesh, const Mat& f_target, int k);

/// Adjusted mutual information with the arithmetic-mean normalizer.
double adjusted_mutual_information(const std::vector<int>& a, const std::vector<int>& b);

/// Fraction of points whose labels agree after the best one-to-one label
/// matching (Hungarian assignment on the contingency table).
double aligned_agreement(const std::vector<int>& predicted, const std::vector<int>& truth);

} // namespace unimatch
