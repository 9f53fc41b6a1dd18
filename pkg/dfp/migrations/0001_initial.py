# Generated manually to define the initial schema for experiment runs and their results
from django.db import migrations, models
import django.db.models.deletion


class Migration(migrations.Migration):

    initial = True

    dependencies = []

    operations = [
        migrations.CreateModel(
            name='ExperimentRun',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('kind', models.CharField(choices=[('train', 'Train'), ('evaluate', 'Evaluate'), ('ablation-table', 'Ablation table'), ('goal-matrix', 'Goal matrix'), ('env-matrix', 'Environment matrix'), ('calibrate', 'Calibrate')], default='train', max_length=20)),
                ('scenario', models.CharField(max_length=20)),
                ('preset', models.CharField(max_length=20)),
                ('seed', models.IntegerField(default=0)),
                ('status', models.CharField(choices=[('running', 'Running'), ('finished', 'Finished'), ('failed', 'Failed')], default='running', max_length=10)),
                ('output_dir', models.CharField(max_length=500)),
                ('config', models.JSONField(blank=True, default=dict)),
                ('preview', models.ImageField(blank=True, upload_to='previews/')),
                ('created_at', models.DateTimeField(auto_now_add=True)),
                ('updated_at', models.DateTimeField(auto_now=True)),
            ],
            options={
                'ordering': ['-created_at', '-id'],
            },
        ),
        migrations.CreateModel(
            name='EvaluationPoint',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('step', models.PositiveBigIntegerField()),
                ('epsilon', models.FloatField()),
                ('learning_rate', models.FloatField()),
                ('means', models.JSONField(default=list)),
                ('stds', models.JSONField(default=list)),
                ('wall_clock', models.FloatField(default=0.0)),
                ('steps_per_sec', models.FloatField(default=0.0)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='points', to='dfp.experimentrun')),
            ],
            options={
                'ordering': ['step', 'id'],
            },
        ),
        migrations.CreateModel(
            name='ResultRow',
            fields=[
                ('id', models.BigAutoField(auto_created=True, primary_key=True, serialize=False, verbose_name='ID')),
                ('table', models.CharField(max_length=40)),
                ('variant', models.CharField(blank=True, max_length=100)),
                ('train_setting', models.CharField(blank=True, max_length=40)),
                ('test_setting', models.CharField(blank=True, max_length=60)),
                ('seeds', models.PositiveIntegerField(default=1)),
                ('metrics', models.JSONField(default=dict)),
                ('run', models.ForeignKey(on_delete=django.db.models.deletion.CASCADE, related_name='results', to='dfp.experimentrun')),
            ],
            options={
                'ordering': ['table', 'id'],
            },
        ),
    ]
