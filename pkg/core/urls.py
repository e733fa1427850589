from django.urls import path
from . import views

urlpatterns = [
    # Run a scenario and store it
    path('runs/', views.create_run, name='create_run'),

    # List stored runs
    path('runs/list/', views.list_runs, name='list_runs'),

    # One stored run
    path('runs/<int:run_id>/', views.run_detail, name='run_detail'),

    # Ad-hoc assignment / knapsack solve
    path('solve/', views.solve, name='solve'),
]
