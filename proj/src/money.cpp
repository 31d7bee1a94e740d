#include "crowdsense/money.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>

namespace crowdsense {

Money Money::from_units(double units) {
    return Money(static_cast<std::int64_t>(std::llround(units * 1000.0)));
}

std::string Money::to_string() const {
    const std::int64_t abs = std::llabs(milli_);
    char buf[48];
    std::snprintf(buf, sizeof buf, "%s%lld.%03lld", milli_ < 0 ? "-" : "",
                  static_cast<long long>(abs / 1000), static_cast<long long>(abs % 1000));
    return buf;
}

}  // namespace crowdsense
