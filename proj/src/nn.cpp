#include "seqfront/nn.hpp"

// Anchors: make sure both scalar instantiations of every layer compile.
namespace seqfront::nn {

template struct LinearT<float>;
template struct LinearT<double>;
template struct LSTMT<float>;
template struct LSTMT<double>;
template struct EmbeddingT<float>;
template struct EmbeddingT<double>;
template struct Conv1dT<float>;
template struct Conv1dT<double>;

}  // namespace seqfront::nn
