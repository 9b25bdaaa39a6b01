#pragma once

#include <string_view>

namespace bnspike {

/// Outcome of evaluating an inequality whose hypotheses may not apply.
enum class Tri { Holds, DoesNotHold, NotApplicable };

/// Outcome of checking a theorem clause against an observed trajectory.
enum class Verdict { Pass, Fail, NotApplicable };

inline std::string_view to_string(Tri t) {
  switch (t) {
    case Tri::Holds: return "holds";
    case Tri::DoesNotHold: return "does-not-hold";
    case Tri::NotApplicable: return "not-applicable";
  }
  return "not-applicable";
}

inline std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::NotApplicable: return "not-applicable";
  }
  return "not-applicable";
}

inline Tri tri(bool holds) { return holds ? Tri::Holds : Tri::DoesNotHold; }
inline Verdict verdict(bool pass) { return pass ? Verdict::Pass : Verdict::Fail; }

}  // namespace bnspike
