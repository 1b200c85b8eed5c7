import pytest

from restcarver.executor import CookieStore, MissingCookieError, TransportError, send_request


class TestCookieStore:
    def test_update_and_get(self):
        store = CookieStore()
        store.update(["session=abc; Path=/"])
        assert store.get("session") == "abc"

    def test_multiple_set_cookie_headers(self):
        store = CookieStore()
        store.update(["a=1", "b=2; HttpOnly"])
        assert store.get("a") == "1"
        assert store.get("b") == "2"

    def test_max_age_expiry(self):
        store = CookieStore()
        store.update(["session=abc; Max-Age=60"], now=1000.0)
        assert store.get("session", now=1030.0) == "abc"
        assert store.get("session", now=1061.0) is None
        assert store.get("session", now=1030.0) is None  # expired cookies purge

    def test_max_age_zero_deletes(self):
        store = CookieStore()
        store.update(["session=abc"], now=1000.0)
        store.update(["session=abc; Max-Age=0"], now=1001.0)
        assert store.get("session", now=1001.5) is None

    def test_expires_attribute(self):
        store = CookieStore()
        store.update(["s=v; Expires=Wed, 21 Oct 2015 07:28:00 GMT"], now=0.0)
        assert store.get("s", now=100.0) == "v"
        assert store.get("s", now=2_000_000_000.0) is None

    def test_later_value_wins(self):
        store = CookieStore()
        store.update(["s=first"])
        store.update(["s=second"])
        assert store.get("s") == "second"

    def test_header_value(self):
        store = CookieStore()
        store.update(["a=1"])
        store.update(["b=2"])
        assert store.header_value() == "a=1; b=2"
        assert CookieStore().header_value() is None

    def test_resolve_placeholders(self):
        store = CookieStore()
        store.update(["session=abc"])
        assert store.resolve("session={{cookie:session}}") == "session=abc"

    def test_resolve_missing_raises(self):
        with pytest.raises(MissingCookieError):
            CookieStore().resolve("x={{cookie:ghost}}")


class TestSendRequest:
    def test_round_trip_against_fixture(self, fixture_url):
        response = send_request("GET", fixture_url + "/tags")
        assert response.status == 200
        assert response.body_mime == "application/json"
        assert b"tag1" in response.body

    def test_host_header_follows_target(self):
        import socket
        import threading

        captured = []
        listener = socket.socket()
        listener.bind(("127.0.0.1", 0))
        listener.listen(1)
        port = listener.getsockname()[1]

        def serve_once():
            conn, _ = listener.accept()
            captured.append(conn.recv(4096))
            conn.sendall(b"HTTP/1.1 204 No Content\r\nContent-Length: 0\r\n\r\n")
            conn.close()

        thread = threading.Thread(target=serve_once, daemon=True)
        thread.start()
        # a recorded Host header from another server must not leak through
        response = send_request("GET", f"http://127.0.0.1:{port}/x",
                                [("Host", "original.example"), ("X-Keep", "1")])
        thread.join(timeout=5)
        listener.close()
        assert response.status == 204
        raw = captured[0].decode()
        assert f"Host: 127.0.0.1:{port}" in raw
        assert "original.example" not in raw
        assert "X-Keep: 1" in raw

    def test_transport_error_on_closed_port(self):
        with pytest.raises(TransportError):
            send_request("GET", "http://127.0.0.1:1/none", timeout=0.5)

    def test_query_string_forwarded(self, fixture_url):
        response = send_request("GET", fixture_url + "/tags?x=1")
        assert response.status == 200
