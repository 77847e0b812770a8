/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include "kadrtc/node.hpp"

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace kadrtc {

struct peer_identity
{
	std::string name;
	node_id key;

	static peer_identity from_name(std::string name);
};

// Where a peer can currently be reached: stored in the DHT under
// SHA-1(peer name), one copy per publishing gateway.
struct presence_record
{
	node_id peer_key;
	std::string peer_name;
	peer_info gateway;
	std::uint64_t seq = 0;
	timestamp expires_at{0};

	// DHT value bytes; expires_at is carried by the record's TTL instead
	std::string encode() const;
	static std::optional<presence_record> decode(std::string_view value, timestamp expires_at);
};

// The winning record: highest (seq, gateway id) among the unexpired ones.
std::optional<presence_record> newest_presence(std::vector<presence_record> const& records, timestamp now);

enum class signal_kind : std::uint8_t { offer, answer, candidate, bye };

char const* to_string(signal_kind k);
std::optional<signal_kind> signal_kind_from_string(std::string_view s);

// One offer/answer/ICE message. The blob is never interpreted.
struct signal_envelope
{
	std::string from_peer;
	std::string to_peer;
	std::string session_id;  // 32 lowercase hex characters
	std::uint64_t seq = 0;
	signal_kind kind = signal_kind::offer;
	std::string blob;

	std::string encode() const;
	static std::optional<signal_envelope> decode(std::string_view raw);

	friend bool operator==(signal_envelope const&, signal_envelope const&) = default;
};

// A text frame of the WebSocket gateway protocol. Which optional fields
// are present depends on `op`.
struct gateway_frame
{
	std::string op;
	std::optional<std::string> name;
	std::optional<std::string> to;
	std::optional<std::string> session;
	std::optional<std::string> kind;
	std::optional<std::int64_t> seq;
	std::optional<std::string> blob;
	std::optional<std::int64_t> replicas;
	std::optional<std::string> from;
	std::optional<std::string> code;
	std::optional<std::string> detail;

	friend bool operator==(gateway_frame const&, gateway_frame const&) = default;
};

// client -> gateway: register, connect, signal, leave
std::optional<gateway_frame> parse_client_frame(std::string_view text);
// gateway -> client: registered, session, signal, error
std::optional<gateway_frame> parse_server_frame(std::string_view text);
// canonical JSON text: sorted keys, no whitespace
std::string format_frame(gateway_frame const& f);

gateway_frame registered_frame(std::int64_t replicas);
gateway_frame session_frame(std::string const& session, std::string const& from);
gateway_frame signal_frame(std::string const& session, signal_kind kind, std::int64_t seq, std::string const& blob);
gateway_frame error_frame(std::string const& code, std::string const& detail);

// The gateway's view of one WebSocket.
class client_link
{
public:
	virtual ~client_link() = default;
	// false once the socket is gone
	virtual bool send_frame(std::string const& text) = 0;
};

struct gateway_config
{
	seconds presence_ttl{60};
	seconds presence_refresh{30};
	// how long an out-of-order envelope waits for the missing ones before
	// it is released with the gap visible in its seq
	milliseconds gap_timeout{4000};
};

enum class resolve_status { found, not_found, lookup_failed };

struct resolve_result
{
	resolve_status status = resolve_status::not_found;
	std::optional<presence_record> record;
	int rounds = 0;
};

struct register_result
{
	bool ok = false;
	int replicas = 0;
	std::string error;  // REGISTER_FAILED detail or BAD_REQUEST reason
};

// Serves browser clients on top of a DHT node: registers their presence,
// locates remote peers and relays their signaling envelopes through
// SIGNAL_RELAY. Lives on the node's event loop.
class gateway
{
public:
	using client_id = std::uint64_t;

	explicit gateway(node& dht, gateway_config cfg = {});
	~gateway();

	gateway(gateway const&) = delete;
	gateway& operator=(gateway const&) = delete;

	node& dht() { return m_node; }
	gateway_config const& config() const { return m_config; }

	client_id attach(std::shared_ptr<client_link> link);
	void on_frame(client_id client, std::string_view text);
	// the socket closed: presence refresh stops and sessions are dropped
	void detach(client_id client);

	void register_peer(client_id client, std::string const& name, std::function<void(register_result)> done);
	void resolve(std::string const& name, std::function<void(resolve_result)> done);
	void connect(client_id client, std::string const& to);
	void leave(client_id client);

	// SIGNAL_RELAY handler: true iff the envelope reached a live socket
	bool relay_signal(peer_info const& from, signal_relay_body const& body);

	std::size_t client_count() const { return m_clients.size(); }
	std::size_t session_count() const;
	// lookup rounds spent resolving the remote peer of an outbound session
	std::optional<int> session_resolve_rounds(client_id client, std::string const& session) const;

private:
	struct session
	{
		std::string id;
		std::string remote_name;
		peer_info remote_gateway;
		bool outbound = false;
		int resolve_rounds = 0;
		std::int64_t last_sent_seq = 0;
		std::uint64_t next_expected = 1;
		std::map<std::uint64_t, signal_envelope> held;
		timer_id gap_timer = 0;
	};

	struct client
	{
		std::shared_ptr<client_link> link;
		std::optional<std::string> name;
		bool registered = false;
		std::uint64_t presence_seq = 0;
		timer_id refresh_timer = 0;
		std::map<std::string, session> sessions;
	};

	client* find_client(client_id id);
	void send(client_id id, gateway_frame const& f);
	void refresh_presence(client_id id);
	void relay(client_id id, std::string const& session_id, signal_envelope env, bool may_reresolve);
	void on_signal(client_id id, gateway_frame const& f);
	bool deliver(client_id id, session& s, signal_envelope const& env);
	void release_held(client_id id, std::string const& session_id, bool force);
	void drop_session(client& c, std::string const& session_id);
	void drop_client_state(client& c);
	std::string new_session_id();

	node& m_node;
	gateway_config m_config;
	client_id m_next_client = 1;
	std::map<client_id, client> m_clients;
	// registered peer key -> client
	std::unordered_map<node_id, client_id, node_id_hash> m_by_key;
	std::shared_ptr<bool> m_alive;
};

// In-process client_link for simulations and tests. Frames from the
// gateway are recorded (and handed to on_frame); frames to the gateway are
// delivered on the next turn of the event loop.
class loopback_client : public client_link, public std::enable_shared_from_this<loopback_client>
{
public:
	static std::shared_ptr<loopback_client> open(gateway& gw);

	bool send_frame(std::string const& text) override;

	void send(gateway_frame const& f) { send_raw(format_frame(f)); }
	void send_raw(std::string text);
	void close();
	bool closed() const { return m_closed; }
	gateway::client_id id() const { return m_id; }

	std::vector<gateway_frame> const& received() const { return m_received; }
	std::vector<std::string> const& raw_received() const { return m_raw; }
	std::function<void(gateway_frame const&)> on_frame;

	explicit loopback_client(gateway& gw) : m_gateway(&gw) {}

private:
	gateway* m_gateway;
	gateway::client_id m_id = 0;
	bool m_closed = false;
	std::vector<gateway_frame> m_received;
	std::vector<std::string> m_raw;
};

} // namespace kadrtc
