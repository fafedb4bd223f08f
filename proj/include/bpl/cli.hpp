#pragma once

namespace bpl::cli {

/// Entry point of the `bayespl` executable. Returns 0 on success, 1 on a
/// validation error and 2 on an I/O error.
int run(int argc, char** argv);

}  // namespace bpl::cli
