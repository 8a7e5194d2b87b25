"""Exception hierarchy. Every domain failure derives from ``NamecastError``."""


class NamecastError(Exception):
    """Base class for domain errors (the CLI maps these to exit code 1)."""


class MalformedUri(NamecastError, ValueError):
    pass


class NoDefaultMapping(NamecastError):
    pass


class InvalidTechAddress(NamecastError, ValueError):
    pass


class NotAWildcard(NamecastError, ValueError):
    pass


class WildcardSubscription(NamecastError, ValueError):
    pass


class WeakSeed(NamecastError, ValueError):
    pass


class CertMismatch(NamecastError):
    pass


class MalformedPacket(NamecastError, ValueError):
    pass


class UnknownNode(NamecastError, KeyError):
    def __str__(self) -> str:  # KeyError would repr() the message
        return str(self.args[0]) if self.args else "unknown node"


class UnknownStrategy(NamecastError, ValueError):
    pass


class MissingRP(NamecastError):
    pass


class NoCaches(NamecastError):
    pass


class NoReflector(NamecastError):
    pass


class NotSubscribed(NamecastError):
    pass


class ScenarioError(NamecastError, ValueError):
    """Topology or scenario input that does not follow the file format."""
