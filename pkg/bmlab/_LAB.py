from rdflib.namespace import DefinedNamespace, Namespace
from rdflib.term import URIRef


class LAB(DefinedNamespace):
    _NS = Namespace("https://w3id.org/bmlab/def/")

    # http://www.w3.org/2002/07/owl#Class
    Experiment: URIRef
    ExperimentReport: URIRef
    Row: URIRef

    # http://www.w3.org/2002/07/owl#ObjectProperty
    hasReport: URIRef
    refExperiment: URIRef

    # http://www.w3.org/2002/07/owl#DatatypeProperty
    functionSpec: URIRef
    modelSpec: URIRef

    # http://purl.org/linked-data/cube#DimensionProperty
    n: URIRef
    seed: URIRef
    codeVersion: URIRef
    replications: URIRef

    # http://purl.org/linked-data/cube#MeasureProperty
    status: URIRef
    varHat: URIRef
    varSe: URIRef
    sigma2: URIRef
    tv: URIRef
    tvFloor: URIRef
    kolmogorov: URIRef
    kolmogorovPValue: URIRef
    nnp21Rate: URIRef
    steinDisc: URIRef
    steinSe: URIRef
    steinMaxZ: URIRef
    lambdaHat: URIRef
    muHat: URIRef
    nuHat: URIRef
    nuSe: URIRef
    gammaFgVar: URIRef
    gammaFgVarSe: URIRef
    gammaFfMin: URIRef
    bilinearityResidual: URIRef
    chaosTvDiagnostic: URIRef
    identityMaxZ: URIRef
    identityPoints: URIRef
    identityFailures: URIRef
    truncationGap: URIRef
    truncationGapSe: URIRef
    truncationPsi: URIRef
    truncationBound: URIRef
