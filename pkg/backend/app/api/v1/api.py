"""
API v1 router.
"""
from fastapi import APIRouter

from app.api.v1.endpoints import analytics, runs, verify

api_router = APIRouter()

api_router.include_router(verify.router, prefix="/verify", tags=["Verification"])
api_router.include_router(analytics.router, prefix="/analytics", tags=["Analytics"])
api_router.include_router(runs.router, prefix="/runs", tags=["Runs"])
