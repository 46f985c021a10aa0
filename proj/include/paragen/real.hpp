#pragma once

namespace paragen {

// Model scalar type. Double by default so gradient checks against central
// finite differences are meaningful; -DPARAGEN_SINGLE_PRECISION=ON switches
// the whole model to float.
#ifdef PARAGEN_SINGLE_PRECISION
using real = float;
#else
using real = double;
#endif

}  // namespace paragen
