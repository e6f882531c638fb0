#include <cstdlib>

#include <httplib.h>

#include "qtune/agent.hpp"

namespace qtune::agent {

namespace {

class HttpChatBackend : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
    caps_.name = cfg_.model;
    caps_.max_input_tokens = cfg_.max_input_tokens;
  }

  const BackendCaps& caps() const override { return caps_; }

  std::string complete(const std::vector<prompt::Message>& messages) override {
    httplib::Client client(cfg_.endpoint);
    client.set_connection_timeout(cfg_.timeout_seconds, 0);
    client.set_read_timeout(cfg_.timeout_seconds, 0);

    httplib::Headers headers;
    if (const char* key = std::getenv(cfg_.api_key_env.c_str()); key != nullptr && *key != '\0')
      headers.emplace("Authorization", std::string("Bearer ") + key);

    const std::string body = build_chat_request(cfg_, messages).dump();
    auto res = client.Post(cfg_.path, headers, body, "application/json");
    if (!res)
      throw TransportError("chat request to " + cfg_.endpoint + cfg_.path +
                           " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
      throw TransportError("chat request returned HTTP " + std::to_string(res->status) + ": " +
                           res->body);
    nlohmann::ordered_json doc;
    try {
      doc = nlohmann::ordered_json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("chat response is not valid JSON: ") + e.what());
    }
    return extract_chat_reply(doc);
  }

 private:
  HttpBackendConfig cfg_;
  BackendCaps caps_;
};

}  // namespace

std::unique_ptr<ChatBackend> make_http_backend(const HttpBackendConfig& cfg) {
  return std::make_unique<HttpChatBackend>(cfg);
}

}  // namespace qtune::agent
