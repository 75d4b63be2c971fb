#include <pybind11/pybind11.h>
PYBIND11_MODULE(_seqfront, m) { m.doc() = "seqfront"; }
