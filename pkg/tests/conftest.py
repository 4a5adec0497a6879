import pytest

from agora.corpus import medical_ontology, medical_scenario
from agora.ontology import ontology_from_json
from agora.registrar import Registrar, Registration
from agora.scenario import parse_scenario


@pytest.fixture
def ontology():
    return ontology_from_json(medical_ontology())


@pytest.fixture
def registrar():
    return Registrar()


def make_provider(agent_id, capabilities, registered_at=0, environment="provisioning"):
    return Registration(
        agent_id=agent_id, kind="Provider", environment=environment,
        capabilities=frozenset(capabilities), registered_at=registered_at,
    )


def make_expert(agent_id, domains, kind="DomainExpert", registered_at=0,
                environment="identification"):
    return Registration(
        agent_id=agent_id, kind=kind, environment=environment,
        domains=frozenset(domains), registered_at=registered_at,
    )


@pytest.fixture
def medical():
    return parse_scenario(medical_scenario())
