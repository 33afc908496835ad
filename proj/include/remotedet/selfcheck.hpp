#pragma once

#include <ostream>

namespace remotedet {

/// Runs the built-in consistency checks (scan vs recurrence, scan-order round trips, block reductions,
/// loss and metric identities, gradient checks) and prints one line per check. Returns the failure count.
int run_selfcheck(std::ostream& out);

}  // namespace remotedet
