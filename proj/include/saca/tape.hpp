#pragma once

#include <functional>
#include <thread>
#include <vector>

#include "saca/tensor.hpp"

namespace saca {

// Linear record of executed primitives. While a Scope is active, ops append
// their vector-Jacobian closures; backward() replays them once in reverse
// order, accumulating (+=) into every participating gradient buffer.
//
// A tape is single-threaded: it binds to the thread that first activates it
// and rejects use from any other. Run patch-parallel work on independent
// tapes and join at the accumulation point.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::function<void()> vjp);

  // Seeds d(loss)/d(loss) = 1 and replays the record in reverse. The loss
  // must be a size-1 tensor produced by ops recorded on this tape. A tape
  // supports exactly one backward pass.
  void backward(Tensor& loss);

  bool spent() const { return spent_; }
  std::size_t size() const { return entries_.size(); }

  // Tape activated by the innermost live Scope on this thread, or null.
  static GradTape* active();

  class Scope {
   public:
    explicit Scope(GradTape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    GradTape* prev_;
  };

 private:
  void check_thread() const;

  std::vector<std::function<void()>> entries_;
  bool spent_ = false;
  bool bound_ = false;
  std::thread::id owner_;
};

}  // namespace saca
