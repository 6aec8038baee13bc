#include "saca/tape.hpp"

namespace saca {

namespace {
thread_local GradTape* g_active_tape = nullptr;
}

GradTape* GradTape::active() { return g_active_tape; }

GradTape::Scope::Scope(GradTape& tape) : prev_(g_active_tape) {
  if (!tape.bound_) {
    tape.bound_ = true;
    tape.owner_ = std::this_thread::get_id();
  } else if (tape.owner_ != std::this_thread::get_id()) {
    throw ValueError("tape is bound to another thread");
  }
  g_active_tape = &tape;
}

GradTape::Scope::~Scope() { g_active_tape = prev_; }

void GradTape::check_thread() const {
  if (bound_ && owner_ != std::this_thread::get_id()) {
    throw ValueError("tape is bound to another thread");
  }
}

void GradTape::record(std::function<void()> vjp) {
  check_thread();
  if (spent_) throw ValueError("tape has already been replayed");
  entries_.push_back(std::move(vjp));
}

void GradTape::backward(Tensor& loss) {
  check_thread();
  if (spent_) throw ValueError("tape has already been replayed");
  if (loss.size() != 1) {
    throw DimensionError("backward needs a scalar loss, shape is " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad() || !loss.has_grad()) {
    throw ValueError("loss was not recorded on this tape");
  }
  loss.grad()[0] += 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  spent_ = true;
}

}  // namespace saca
