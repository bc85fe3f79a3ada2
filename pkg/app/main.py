# app/main.py
import asyncio
import contextlib
from contextlib import asynccontextmanager
from typing import Any, Dict, List, Optional

import structlog
from fastapi import Body, Depends, FastAPI, HTTPException, Request, status
from fastapi.responses import JSONResponse, PlainTextResponse, Response
from fastapi.security import HTTPBasic, HTTPBasicCredentials
from pydantic import BaseModel, Field

from app.core.config import Settings, settings
from app.core.errors import AuthenticationFailed, ConfigError, ShadowError, Unauthorized
from app.core.logging import configure_logging, is_configured
from app.edge import EdgeRuntime, build_runtime, can_read, state_summary, twin_view
from app.security.policy import Action, Grant, policy_to_document, to_mosquitto_acl
from app.security.principals import Principal
from app.tags import rules_to_document
from app.transport.codec import encode_payload
from app.transport.messages import WireMessage
from app.transport.topics import Channel, make_topic

logger = structlog.get_logger(__name__)

security = HTTPBasic()


class HealthCheck(BaseModel):
    status: str
    environment: str
    devices: int
    mqtt_enabled: bool


class GrantBody(BaseModel):
    principal: str
    device: str
    tag: str
    action: Action

    def to_grant(self) -> Grant:
        return Grant(self.principal, self.device, self.tag, self.action)


class TagPushBody(BaseModel):
    tags: List[str] = Field(min_length=1)


class PublishAck(BaseModel):
    accepted: bool
    topic: str
    reason: str = ""


async def reap_forever(runtime: EdgeRuntime, interval_s: float) -> None:
    """Periodically put idle twins to sleep and flush devices with pending conform reports."""
    while True:
        await asyncio.sleep(interval_s)
        try:
            reaped = runtime.service.reap_idle()
            runtime.poll_devices()
            if reaped:
                logger.info("reaper_sweep", reaped=reaped)
        except Exception:
            logger.exception("reaper_failed")


def create_app(runtime: Optional[EdgeRuntime] = None, config: Optional[Settings] = None) -> FastAPI:
    config = config or (runtime.settings if runtime else settings)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        if not is_configured():
            configure_logging(config.log_level, config.log_json)
        current = app.state.runtime or build_runtime(config)
        app.state.runtime = current
        current.start()
        reaper = asyncio.create_task(reap_forever(current, config.reap_interval_s))
        logger.info("http_surface_ready", host=config.http_host, port=config.http_port)
        try:
            yield
        finally:
            reaper.cancel()
            with contextlib.suppress(asyncio.CancelledError):
                await reaper
            current.stop()

    app = FastAPI(
        title="twinmesh",
        version="1.0.0",
        description="Edge digital twins with tag-partitioned shadows and tag-based access control",
        lifespan=lifespan,
    )
    app.state.runtime = runtime

    def get_runtime(request: Request) -> EdgeRuntime:
        return request.app.state.runtime

    def current_principal(
        request: Request, credentials: HTTPBasicCredentials = Depends(security)
    ) -> Principal:
        try:
            return get_runtime(request).credentials.authenticate(credentials.username, credentials.password)
        except AuthenticationFailed:
            raise HTTPException(
                status_code=status.HTTP_401_UNAUTHORIZED,
                detail="Invalid credentials",
                headers={"WWW-Authenticate": "Basic"},
            )

    def admin_principal(principal: Principal = Depends(current_principal)) -> Principal:
        if not principal.is_admin:
            raise Unauthorized(f"{principal.id!r} is not an admin")
        return principal

    @app.exception_handler(ShadowError)
    async def shadow_error_handler(request: Request, exc: ShadowError):
        return JSONResponse(status_code=exc.code, content=exc.to_payload())

    @app.exception_handler(ConfigError)
    async def config_error_handler(request: Request, exc: ConfigError):
        return JSONResponse(status_code=status.HTTP_400_BAD_REQUEST, content={"code": 400, "message": str(exc)})

    @app.get("/health", response_model=HealthCheck)
    def health_check(request: Request):
        runtime = get_runtime(request)
        return HealthCheck(
            status="healthy",
            environment=config.environment,
            devices=len(runtime.service.devices()),
            mqtt_enabled=config.mqtt_enabled,
        )

    @app.get("/things/{device_id}/shadow")
    def get_shadow(
        request: Request,
        device_id: str,
        name: Optional[str] = None,
        principal: Principal = Depends(current_principal),
    ):
        """Base shadow, or the tag twin `name`, if the caller may read it."""
        runtime = get_runtime(request)
        if not can_read(runtime.service.policy, principal, device_id, name):
            raise Unauthorized(f"{principal.id!r} may not read {device_id}/{name or 'base'}")
        if name is None:
            body = runtime.service.document(device_id)
        else:
            body = twin_view(runtime.service.twin(device_id, name))
        return Response(content=encode_payload(body), media_type="application/json")

    @app.post("/things/{device_id}/shadow", response_model=PublishAck, status_code=status.HTTP_202_ACCEPTED)
    def update_shadow(
        request: Request,
        device_id: str,
        payload: Dict[str, Any] = Body(...),
        name: Optional[str] = None,
        principal: Principal = Depends(current_principal),
    ):
        """Publish an update request on the caller's behalf; the bus authorizes it."""
        runtime = get_runtime(request)
        topic = make_topic(device_id, name, Channel.UPDATE)
        result = runtime.bus.publish(principal, WireMessage(topic, encode_payload(payload), qos=config.shadow_qos))
        if not result:
            raise Unauthorized(result.reason)
        return PublishAck(accepted=True, topic=str(topic))

    @app.get("/admin/grants")
    def list_grants(request: Request, _: Principal = Depends(admin_principal)):
        return policy_to_document(get_runtime(request).service.policy.current)

    @app.post("/admin/grants")
    def add_grant(request: Request, body: GrantBody, principal: Principal = Depends(admin_principal)):
        policy = get_runtime(request).service.policy.grant(body.to_grant(), principal)
        return {"grants": len(policy)}

    @app.post("/admin/grants/revoke")
    def revoke_grant(request: Request, body: GrantBody, principal: Principal = Depends(admin_principal)):
        policy = get_runtime(request).service.policy.revoke(body.to_grant(), principal)
        return {"grants": len(policy)}

    @app.get("/admin/acl", response_class=PlainTextResponse)
    def mosquitto_acl(request: Request, _: Principal = Depends(admin_principal)):
        runtime = get_runtime(request)
        return to_mosquitto_acl(runtime.service.policy.current, runtime.credentials.principals())

    @app.post("/admin/things/{device_id}/tags")
    def push_tags(
        request: Request, device_id: str, body: TagPushBody, principal: Principal = Depends(current_principal)
    ):
        tag_set = get_runtime(request).service.push_tags(principal, device_id, body.tags)
        return {"device_id": tag_set.device_id, "tags": list(tag_set.tags), "applied_at": tag_set.applied_at}

    @app.get("/admin/things/{device_id}/twins")
    def list_twins(request: Request, device_id: str, _: Principal = Depends(admin_principal)):
        runtime = get_runtime(request)
        return {
            "device_id": device_id,
            "base": state_summary(runtime.service.document(device_id)),
            "twins": [
                {
                    "tag": entry.tag,
                    "status": entry.state.value,
                    "last_active": entry.last_active,
                    "forwarded": dict(entry.forwarded),
                    **state_summary(entry.shadow),
                }
                for entry in runtime.service.twins(device_id)
            ],
        }

    @app.post("/admin/reap")
    def reap(request: Request, _: Principal = Depends(admin_principal)):
        return {"reaped": get_runtime(request).service.reap_idle()}

    @app.get("/admin/rules")
    def get_rules(request: Request, _: Principal = Depends(admin_principal)):
        return rules_to_document(get_runtime(request).service.rules.current)

    @app.put("/admin/rules")
    def put_rules(request: Request, document: Dict[str, Any] = Body(...), _: Principal = Depends(admin_principal)):
        rules = get_runtime(request).service.rules
        rules.reload_from(document)
        return {"rules": len(rules.current)}

    @app.get("/admin/metrics")
    def metrics(request: Request, _: Principal = Depends(admin_principal)):
        runtime = get_runtime(request)
        return {
            "processing": runtime.service.monitor.summary(),
            "denials": len(runtime.bus.audit_log),
            "diagnostics": list(runtime.service.diagnostics)[-50:],
        }

    return app


app = create_app()
