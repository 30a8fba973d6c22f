#pragma once

#include <string>

#include "promptunit/gateway.hpp"

namespace promptunit {

/// A model bound to the gateway and request policy it should be called with.
struct ModelClient {
  Gateway* gateway = nullptr;
  ModelSpec model;
  RequestPolicy policy;
  std::size_t parallelism = 4;  ///< fan-out width for per-item requests

  ChatExchange exchange(std::span<const Message> messages) const {
    return gateway->complete(model, messages, policy);
  }
  std::string ask(std::span<const Message> messages) const { return exchange(messages).response.text; }
};

}  // namespace promptunit
