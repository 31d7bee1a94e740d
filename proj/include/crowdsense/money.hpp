#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace crowdsense {

// Fixed-point currency in milli-units. Every balance, fee, reward and ask in
// the project goes through this type so ledger sums are exact.
class Money {
public:
    constexpr Money() = default;

    static constexpr Money from_milli(std::int64_t milli) { return Money(milli); }
    // Rounds to the nearest milli-unit.
    static Money from_units(double units);

    constexpr std::int64_t milli() const { return milli_; }
    double units() const { return static_cast<double>(milli_) / 1000.0; }

    // Decimal rendering with three fractional digits, e.g. "1.100", "-0.500".
    std::string to_string() const;

    constexpr Money& operator+=(Money o) { milli_ += o.milli_; return *this; }
    constexpr Money& operator-=(Money o) { milli_ -= o.milli_; return *this; }
    friend constexpr Money operator+(Money a, Money b) { return Money(a.milli_ + b.milli_); }
    friend constexpr Money operator-(Money a, Money b) { return Money(a.milli_ - b.milli_); }
    friend constexpr Money operator-(Money a) { return Money(-a.milli_); }
    friend constexpr auto operator<=>(Money, Money) = default;

private:
    constexpr explicit Money(std::int64_t milli) : milli_(milli) {}
    std::int64_t milli_ = 0;
};

}  // namespace crowdsense
