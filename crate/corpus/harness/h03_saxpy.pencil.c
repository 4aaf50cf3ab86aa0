void saxpy(int n, int a, int X[const restrict static n], int Y[const restrict static n])
{
  for (int i = 0; i < n; i++)
    Y[i] = a * X[i] + Y[i];
}
