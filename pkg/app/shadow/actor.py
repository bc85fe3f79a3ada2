import threading
from collections import deque
from dataclasses import dataclass
from typing import Deque, List, Optional, Union

from app.core.events import ShadowEvent, ShadowId
from app.domain.models import ShadowDocument
from app.shadow.state import DesiredUpdate, ReportedUpdate, apply_desired, apply_reported


@dataclass(frozen=True)
class ReportedCommand:
    update: ReportedUpdate
    expected_version: Optional[int] = None
    now_ms: Optional[int] = None


@dataclass(frozen=True)
class DesiredCommand:
    update: DesiredUpdate
    expected_version: Optional[int] = None
    now_ms: Optional[int] = None


Command = Union[ReportedCommand, DesiredCommand]


class ShadowActor:
    """
    Single owner of one shadow document.

    Mutations are queued on the inbox and applied strictly in arrival order;
    readers only ever see immutable snapshots.
    """

    def __init__(self, shadow_id: ShadowId, document: Optional[ShadowDocument] = None):
        self.shadow_id = shadow_id
        self._document = document or ShadowDocument()
        self._inbox: Deque[Command] = deque()
        self._lock = threading.Lock()

    @property
    def document(self) -> ShadowDocument:
        return self._document

    def submit(self, command: Command) -> None:
        self._inbox.append(command)

    def drain(self) -> List[ShadowEvent]:
        """Apply every queued command in order and return all resulting events."""
        events: List[ShadowEvent] = []
        with self._lock:
            while self._inbox:
                events.extend(self._handle(self._inbox.popleft()))
        return events

    def tell(self, command: Command) -> List[ShadowEvent]:
        self.submit(command)
        return self.drain()

    def reset(self) -> None:
        with self._lock:
            self._inbox.clear()
            self._document = ShadowDocument()

    def _handle(self, command: Command) -> List[ShadowEvent]:
        if isinstance(command, ReportedCommand):
            self._document, events = apply_reported(
                self._document,
                command.update,
                shadow_id=self.shadow_id,
                expected_version=command.expected_version,
                now_ms=command.now_ms,
            )
        else:
            self._document, events = apply_desired(
                self._document,
                command.update,
                shadow_id=self.shadow_id,
                expected_version=command.expected_version,
                now_ms=command.now_ms,
            )
        return events
