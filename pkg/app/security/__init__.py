"""Principals, tag-based grants and topic authorization"""
from .authorizer import Decision, Operation, authorize, required_action
from .policy import (
    BASE_GRANT_TAG,
    AccessPolicy,
    Action,
    Grant,
    PolicyStore,
    grant,
    load_policy,
    parse_policy,
    policy_to_document,
    revoke,
    to_mosquitto_acl,
)
from .principals import (
    SERVICE_PRINCIPAL,
    CredentialStore,
    PasswordCredential,
    Principal,
    PskCredential,
    Role,
    hash_password,
    load_credentials,
    parse_credentials,
    verify_password,
)

__all__ = [
    "BASE_GRANT_TAG",
    "SERVICE_PRINCIPAL",
    "AccessPolicy",
    "Action",
    "CredentialStore",
    "Decision",
    "Grant",
    "Operation",
    "PasswordCredential",
    "PolicyStore",
    "Principal",
    "PskCredential",
    "Role",
    "authorize",
    "grant",
    "hash_password",
    "load_credentials",
    "load_policy",
    "parse_credentials",
    "parse_policy",
    "policy_to_document",
    "required_action",
    "revoke",
    "to_mosquitto_acl",
    "verify_password",
]
