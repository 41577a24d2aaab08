#pragma once

#include <cstdio>
#include <cstdlib>

// Hard invariant checks on every table operation. Enabled for the test and
// acceptance builds by defining TINYPTR_CHECK_INVARIANTS.
#ifdef TINYPTR_CHECK_INVARIANTS
#define TINYPTR_INVARIANT(cond, msg)                                                   \
  do {                                                                                 \
    if (!(cond)) {                                                                     \
      std::fprintf(stderr, "%s:%d: invariant violated: %s (%s)\n", __FILE__, __LINE__, \
                   msg, #cond);                                                        \
      std::abort();                                                                    \
    }                                                                                  \
  } while (false)
#else
#define TINYPTR_INVARIANT(cond, msg) \
  do {                               \
  } while (false)
#endif
