from __future__ import annotations

from dataclasses import dataclass

from .geometry import BoxedTrack


@dataclass(eq=False)
class RelationInstance:
    """A grounded <subject, predicate, object> over a frame span.

    Used at both segment and video scope.  ``subject`` and ``object`` are
    clipped to ``span``.
    """

    subject: BoxedTrack
    predicate: str
    object: BoxedTrack
    score: float
    span: tuple[int, int]

    @property
    def triplet(self) -> tuple[str, str, str]:
        return (self.subject.category, self.predicate, self.object.category)

    @property
    def duration(self) -> int:
        return self.span[1] - self.span[0]

    def __eq__(self, other):
        if not isinstance(other, RelationInstance):
            return NotImplemented
        return (self.subject == other.subject and self.object == other.object
                and self.predicate == other.predicate and self.score == other.score
                and tuple(self.span) == tuple(other.span))


VideoRelationInstance = RelationInstance
