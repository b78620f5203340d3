#pragma once

#include <cassert>
#include <type_traits>
#include <utility>
#include <variant>

namespace beacons {

template <typename E>
struct Unexpected {
  E error;
};

template <typename E>
Unexpected<E> unexpected(E e) {
  return {std::move(e)};
}

/// Value-or-error return type for operations with enumerated failure modes.
/// Stand-in for std::expected until the toolchain ships it.
template <typename T, typename E>
class Expected {
 public:
  Expected(T value) : v_(std::in_place_index<0>, std::move(value)) {}
  Expected(Unexpected<E> err) : v_(std::in_place_index<1>, std::move(err.error)) {}
  template <typename G>
    requires(!std::is_same_v<G, E> && std::is_constructible_v<E, G>)
  Expected(Unexpected<G> err) : v_(std::in_place_index<1>, E(std::move(err.error))) {}

  bool has_value() const { return v_.index() == 0; }
  explicit operator bool() const { return has_value(); }

  T& value() & {
    assert(has_value());
    return std::get<0>(v_);
  }
  const T& value() const& {
    assert(has_value());
    return std::get<0>(v_);
  }
  T&& value() && {
    assert(has_value());
    return std::get<0>(std::move(v_));
  }
  const E& error() const {
    assert(!has_value());
    return std::get<1>(v_);
  }

  T* operator->() { return &value(); }
  const T* operator->() const { return &value(); }
  T& operator*() & { return value(); }
  const T& operator*() const& { return value(); }

 private:
  std::variant<T, E> v_;
};

/// Void specialisation: success or an error value.
template <typename E>
class Expected<void, E> {
 public:
  Expected() = default;
  Expected(Unexpected<E> err) : err_(std::move(err.error)), ok_(false) {}

  bool has_value() const { return ok_; }
  explicit operator bool() const { return ok_; }
  const E& error() const {
    assert(!ok_);
    return err_;
  }

 private:
  E err_{};
  bool ok_ = true;
};

}  // namespace beacons
